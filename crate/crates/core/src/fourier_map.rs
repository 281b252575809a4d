//! Real-packed Fourier operator.
//!
//! A real signal `x` of length `n` has a conjugate-symmetric DFT `v`. The
//! packed spectrum `beta` stores the `n` real degrees of freedom of `v`:
//!
//! ```text
//! beta = [v_0, v_{n/2}, sqrt(2) Re v_{1..n/2-1}, sqrt(2) Im v_{1..n/2-1}]
//! ```
//!
//! With the symmetric `1/sqrt(n)` DFT normalization the map `beta -> x` is a
//! real orthogonal matrix `A`, so `A^T = A^{-1}` and both directions cost one
//! FFT per grid line. Grids of dimension two and three apply the 1D map along
//! every axis (a tensor product of orthogonal maps), using row-major order.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Error, Result};

/// Relative bound on the imaginary residue left by an inverse FFT of a
/// conjugate-symmetric spectrum, and on the symmetry defect accepted by
/// [`pack`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Shape of a 1D, 2D or 3D grid whose extents are all even.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridShape {
    dims: Vec<usize>,
}

impl GridShape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        let fail = |reason: &str| Error::UnsupportedShape {
            dims: dims.to_vec(),
            reason: reason.to_owned(),
        };
        if dims.is_empty() || dims.len() > 3 {
            return Err(fail("between one and three axes are supported"));
        }
        if dims.iter().any(|&d| d < 2 || d % 2 != 0) {
            return Err(fail("every extent must be even and at least 2"));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| fail("element count overflows"))?;
        Ok(Self {
            dims: dims.to_vec(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Total number of grid points `n`.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for d in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * self.dims[d + 1];
        }
        strides
    }
}

/// Packed real spectrum `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSpectrum {
    pub values: Vec<f64>,
    pub shape: GridShape,
}

/// Real signal `x` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSignal {
    pub values: Vec<f64>,
    pub shape: GridShape,
}

/// Complex spectrum expected to be conjugate symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianSpectrum {
    pub values: Vec<Complex64>,
    pub shape: GridShape,
}

macro_rules! grid_vector {
    ($ty:ident, $elem:ty, $what:literal) => {
        impl $ty {
            pub fn new(values: Vec<$elem>, shape: GridShape) -> Result<Self> {
                check_len($what, shape.len(), values.len())?;
                Ok(Self { values, shape })
            }

            pub fn zeros(shape: GridShape) -> Self {
                Self {
                    values: vec![<$elem>::default(); shape.len()],
                    shape,
                }
            }
        }
    };
}

grid_vector!(RealSpectrum, f64, "real spectrum");
grid_vector!(RealSignal, f64, "real signal");
grid_vector!(HermitianSpectrum, Complex64, "hermitian spectrum");

/// One FFT pair for a single axis length.
#[derive(Clone)]
struct AxisKernel {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

struct LineScratch {
    buf: Vec<Complex64>,
    fft: Vec<Complex64>,
}

impl AxisKernel {
    fn new(planner: &mut FftPlanner<f64>, len: usize) -> Self {
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            scale: 1.0 / (len as f64).sqrt(),
        }
    }

    fn scratch(&self) -> LineScratch {
        let scratch_len = self
            .forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len());
        LineScratch {
            buf: vec![Complex64::default(); self.len],
            fft: vec![Complex64::default(); scratch_len],
        }
    }

    /// `x = IDFT(unpack(beta))` on one line, in place.
    fn synthesize(&self, line: &mut [f64], s: &mut LineScratch) {
        let n = self.len;
        let h = n / 2;
        let buf = &mut s.buf;
        buf[0] = Complex64::new(line[0], 0.0);
        buf[h] = Complex64::new(line[1], 0.0);
        for k in 1..h {
            let v = Complex64::new(line[k + 1], line[k + h]) * FRAC_1_SQRT_2;
            buf[k] = v;
            buf[n - k] = v.conj();
        }
        self.inverse.process_with_scratch(buf, &mut s.fft);
        let mut peak = 0.0f64;
        let mut residue = 0.0f64;
        for (x, c) in line.iter_mut().zip(buf.iter()) {
            *x = c.re * self.scale;
            peak = peak.max(x.abs());
            residue = residue.max((c.im * self.scale).abs());
        }
        assert!(
            residue <= SYMMETRY_TOL * peak,
            "inverse FFT left imaginary residue {residue:e} against peak {peak:e}"
        );
    }

    /// `beta = pack(DFT(x))` on one line, in place.
    fn analyze(&self, line: &mut [f64], s: &mut LineScratch) {
        let h = self.len / 2;
        let buf = &mut s.buf;
        for (c, &x) in buf.iter_mut().zip(line.iter()) {
            *c = Complex64::new(x, 0.0);
        }
        self.forward.process_with_scratch(buf, &mut s.fft);
        let sc = self.scale;
        let sc2 = sc * std::f64::consts::SQRT_2;
        line[0] = buf[0].re * sc;
        line[1] = buf[h].re * sc;
        for k in 1..h {
            line[k + 1] = buf[k].re * sc2;
            line[k + h] = buf[k].im * sc2;
        }
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Synthesize,
    Analyze,
}

/// The orthogonal operator `A` and its transpose for a fixed grid.
///
/// Immutable after construction; scratch buffers are created per call, so a
/// single instance can be shared across threads.
#[derive(Clone)]
pub struct FourierMap {
    shape: GridShape,
    kernels: Vec<AxisKernel>,
}

impl std::fmt::Debug for FourierMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierMap")
            .field("shape", &self.shape)
            .finish_non_exhaustive()
    }
}

impl FourierMap {
    pub fn new(shape: GridShape) -> Self {
        let mut planner = FftPlanner::new();
        let kernels = shape
            .dims()
            .iter()
            .map(|&len| AxisKernel::new(&mut planner, len))
            .collect();
        Self { shape, kernels }
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `out = A beta`.
    pub fn apply(&self, beta: &[f64], out: &mut [f64]) {
        assert_eq!(beta.len(), self.len(), "apply: input length");
        out.copy_from_slice(beta);
        self.apply_in_place(out);
    }

    /// `out = A^T x`.
    pub fn apply_transpose(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.len(), "apply_transpose: input length");
        out.copy_from_slice(x);
        self.apply_transpose_in_place(out);
    }

    pub fn apply_in_place(&self, data: &mut [f64]) {
        for axis in 0..self.shape.ndim() {
            self.axis_pass(data, axis, Direction::Synthesize);
        }
    }

    pub fn apply_transpose_in_place(&self, data: &mut [f64]) {
        for axis in 0..self.shape.ndim() {
            self.axis_pass(data, axis, Direction::Analyze);
        }
    }

    /// Typed form of [`FourierMap::apply`].
    pub fn apply_a(&self, beta: &RealSpectrum) -> Result<RealSignal> {
        self.check_shape(&beta.shape)?;
        let mut values = beta.values.clone();
        self.apply_in_place(&mut values);
        Ok(RealSignal {
            values,
            shape: self.shape.clone(),
        })
    }

    /// Typed form of [`FourierMap::apply_transpose`].
    pub fn apply_a_transpose(&self, x: &RealSignal) -> Result<RealSpectrum> {
        self.check_shape(&x.shape)?;
        let mut values = x.values.clone();
        self.apply_transpose_in_place(&mut values);
        Ok(RealSpectrum {
            values,
            shape: self.shape.clone(),
        })
    }

    fn check_shape(&self, shape: &GridShape) -> Result<()> {
        if shape != &self.shape {
            return Err(Error::UnsupportedShape {
                dims: shape.dims().to_vec(),
                reason: format!("operator was built for {:?}", self.shape.dims()),
            });
        }
        Ok(())
    }

    fn axis_pass(&self, data: &mut [f64], axis: usize, dir: Direction) {
        let kernel = &self.kernels[axis];
        let len = kernel.len;
        let stride = self.shape.strides()[axis];
        let run = |line: &mut [f64], s: &mut LineScratch| match dir {
            Direction::Synthesize => kernel.synthesize(line, s),
            Direction::Analyze => kernel.analyze(line, s),
        };

        if stride == 1 {
            data.par_chunks_mut(len)
                .for_each_init(|| kernel.scratch(), |s, line| run(line, s));
            return;
        }

        // Strided axis: lines sharing an outer index sit `stride` apart. Tiles of
        // adjacent lines are gathered with unit-stride reads, transformed and
        // scattered back. Tiles never overlap.
        let block = len * stride;
        let tiles_per_block = stride.div_ceil(LINE_TILE);
        let num_tiles = (data.len() / block) * tiles_per_block;
        let base_ptr = SharedMut(data.as_mut_ptr());
        (0..num_tiles).into_par_iter().for_each_init(
            || (kernel.scratch(), vec![0.0; LINE_TILE * len]),
            |(s, tile), t| {
                let start = (t / tiles_per_block) * block + (t % tiles_per_block) * LINE_TILE;
                let width = LINE_TILE.min(stride - (t % tiles_per_block) * LINE_TILE);
                let p = base_ptr.get();
                for k in 0..len {
                    // SAFETY: offsets stay below data.len() and each tile owns its columns.
                    let row =
                        unsafe { std::slice::from_raw_parts(p.add(start + k * stride), width) };
                    for (j, &v) in row.iter().enumerate() {
                        tile[j * len + k] = v;
                    }
                }
                for line in tile.chunks_mut(len).take(width) {
                    run(line, s);
                }
                for k in 0..len {
                    // SAFETY: as above.
                    let row =
                        unsafe { std::slice::from_raw_parts_mut(p.add(start + k * stride), width) };
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = tile[j * len + k];
                    }
                }
            },
        );
    }
}

/// Lines gathered per tile on strided axes.
const LINE_TILE: usize = 16;

/// Raw base pointer shared by workers that write disjoint index sets.
struct SharedMut(*mut f64);

// SAFETY: only used by `axis_pass`, whose tiles are disjoint.
unsafe impl Sync for SharedMut {}

impl SharedMut {
    fn get(&self) -> *mut f64 {
        self.0
    }
}

fn complex_axis_pass(
    data: &mut [Complex64],
    shape: &GridShape,
    axis: usize,
    f: impl Fn(&[Complex64], &mut [Complex64]),
) {
    let len = shape.dims()[axis];
    let stride = shape.strides()[axis];
    let block = len * stride;
    let mut src = vec![Complex64::default(); len];
    let mut dst = vec![Complex64::default(); len];
    for o in 0..data.len() / block {
        for i in 0..stride {
            let base = o * block + i;
            for k in 0..len {
                src[k] = data[base + k * stride];
            }
            f(&src, &mut dst);
            for k in 0..len {
                data[base + k * stride] = dst[k];
            }
        }
    }
}

/// Linear 1D map `v = B^H w` (packed coordinates to spectrum).
fn unpack_line(w: &[Complex64], v: &mut [Complex64]) {
    let n = w.len();
    let h = n / 2;
    let i = Complex64::i();
    v[0] = w[0];
    v[h] = w[1];
    for k in 1..h {
        let (a, c) = (w[k + 1], w[k + h]);
        v[k] = (a + i * c) * FRAC_1_SQRT_2;
        v[n - k] = (a - i * c) * FRAC_1_SQRT_2;
    }
}

/// Linear 1D map `w = B v` (spectrum to packed coordinates).
fn pack_line(v: &[Complex64], w: &mut [Complex64]) {
    let n = v.len();
    let h = n / 2;
    let i = Complex64::i();
    w[0] = v[0];
    w[1] = v[h];
    for k in 1..h {
        w[k + 1] = (v[k] + v[n - k]) * FRAC_1_SQRT_2;
        w[k + h] = i * (v[n - k] - v[k]) * FRAC_1_SQRT_2;
    }
}

/// Largest `|v_k - conj(v_{-k})|` over the grid, indices taken modulo each extent.
pub fn symmetry_defect(v: &HermitianSpectrum) -> f64 {
    let dims = v.shape.dims();
    let strides = v.shape.strides();
    let mut defect = 0.0f64;
    for (lin, val) in v.values.iter().enumerate() {
        let mut partner = 0;
        for d in 0..dims.len() {
            let k = (lin / strides[d]) % dims[d];
            partner += ((dims[d] - k) % dims[d]) * strides[d];
        }
        defect = defect.max((val - v.values[partner].conj()).norm());
    }
    defect
}

/// Packs a conjugate-symmetric spectrum into its real representation.
pub fn pack(v: &HermitianSpectrum) -> Result<RealSpectrum> {
    let scale = v.values.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    let defect = symmetry_defect(v);
    let tolerance = SYMMETRY_TOL * scale;
    if defect > tolerance {
        return Err(Error::MalformedSpectrum { defect, tolerance });
    }
    let mut data = v.values.clone();
    for axis in 0..v.shape.ndim() {
        complex_axis_pass(&mut data, &v.shape, axis, pack_line);
    }
    Ok(RealSpectrum {
        values: data.iter().map(|c| c.re).collect(),
        shape: v.shape.clone(),
    })
}

/// Expands a packed spectrum into the full conjugate-symmetric spectrum.
pub fn unpack(beta: &RealSpectrum) -> HermitianSpectrum {
    let mut data: Vec<Complex64> = beta
        .values
        .iter()
        .map(|&b| Complex64::new(b, 0.0))
        .collect();
    for axis in 0..beta.shape.ndim() {
        complex_axis_pass(&mut data, &beta.shape, axis, unpack_line);
    }
    HermitianSpectrum {
        values: data,
        shape: beta.shape.clone(),
    }
}

/// Packed slots holding the degrees of freedom of 1D frequency `k`.
pub fn packed_slots(n: usize, k: usize) -> Vec<usize> {
    let h = n / 2;
    let k = if k > h { n - k } else { k };
    match k {
        0 => vec![0],
        k if k == h => vec![1],
        k => vec![k + 1, k + h],
    }
}
