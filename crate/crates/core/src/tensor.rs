//! Dense tensor arithmetic and the neural primitives everything else composes.
//!
//! Tensors are row-major (last index fastest) flat `f32` buffers. All
//! reductions (matmul, conv2d) accumulate in `f64` before narrowing back to
//! `f32`, which keeps long activation sums stable. Convolution is
//! cross-correlation: kernels are applied as stored, without flipping.
//!
//! Every operation here is a pure function over immutable inputs; none of
//! them touch shared state, so they can be called from any thread.

use crate::error::{Error, Result};
use std::fmt;

/// List of positive extents describing a tensor's dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(extents: impl Into<Vec<usize>>) -> Result<Self> {
        let extents = extents.into();
        if extents.is_empty() {
            return Err(Error::Dimension(
                "shape must have at least one extent".into(),
            ));
        }
        if extents.contains(&0) {
            return Err(Error::Dimension(format!(
                "shape extents must be >= 1, got {extents:?}"
            )));
        }
        Ok(Shape(extents))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn elem_count(&self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

/// Dense row-major `f32` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if shape.elem_count() != data.len() {
            return Err(Error::Dimension(format!(
                "data length {} does not match shape {} ({} elements)",
                data.len(),
                shape,
                shape.elem_count()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_slice(extents: &[usize], data: &[f32]) -> Result<Self> {
        Tensor::new(Shape::new(extents.to_vec())?, data.to_vec())
    }

    /// 1-D tensor from a value list.
    pub fn vector(data: Vec<f32>) -> Result<Self> {
        Tensor::new(Shape::new(vec![data.len().max(1)])?, data)
    }

    pub fn zeros(shape: Shape) -> Self {
        let n = shape.elem_count();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Same buffer under a new shape with an identical element count.
    pub fn reshape(&self, extents: &[usize]) -> Result<Tensor> {
        let shape = Shape::new(extents.to_vec())?;
        if shape.elem_count() != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {} ({} elements) to {} ({} elements)",
                self.shape,
                self.data.len(),
                shape,
                shape.elem_count()
            )));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn expect_rank(t: &Tensor, rank: usize, what: &str) -> Result<()> {
    if t.shape.rank() != rank {
        return Err(Error::Dimension(format!(
            "{what} expects a rank-{rank} tensor, got shape {}",
            t.shape
        )));
    }
    Ok(())
}

/// Matrix product of `a` (m x k) and `b` (k x n).
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    expect_rank(a, 2, "matmul lhs")?;
    expect_rank(b, 2, "matmul rhs")?;
    let (m, k) = (a.shape.dims()[0], a.shape.dims()[1]);
    let (k2, n) = (b.shape.dims()[0], b.shape.dims()[1]);
    if k != k2 {
        return Err(Error::Dimension(format!(
            "matmul inner extents disagree: {} vs {}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f64;
            for l in 0..k {
                acc += f64::from(a.data[i * k + l]) * f64::from(b.data[l * n + j]);
            }
            out[i * n + j] = acc as f32;
        }
    }
    Tensor::new(Shape::new(vec![m, n])?, out)
}

/// Cross-correlation of `input` (C_in x H x W) with `kernels`
/// (C_out x C_in x kH x kW), zero padding, producing C_out x H' x W'.
pub fn conv2d(input: &Tensor, kernels: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    expect_rank(input, 3, "conv2d input")?;
    expect_rank(kernels, 4, "conv2d kernels")?;
    if stride == 0 {
        return Err(Error::InvalidArgument("conv2d stride must be >= 1".into()));
    }
    let [c_in, h, w] = [
        input.shape.dims()[0],
        input.shape.dims()[1],
        input.shape.dims()[2],
    ];
    let [c_out, kc, kh, kw] = [
        kernels.shape.dims()[0],
        kernels.shape.dims()[1],
        kernels.shape.dims()[2],
        kernels.shape.dims()[3],
    ];
    if kc != c_in {
        return Err(Error::Dimension(format!(
            "conv2d channel mismatch: input {} vs kernels {}",
            input.shape, kernels.shape
        )));
    }
    if kh > h + 2 * padding || kw > w + 2 * padding {
        return Err(Error::Dimension(format!(
            "conv2d kernel {}x{} larger than padded input {}x{}",
            kh,
            kw,
            h + 2 * padding,
            w + 2 * padding
        )));
    }
    let h_out = (h + 2 * padding - kh) / stride + 1;
    let w_out = (w + 2 * padding - kw) / stride + 1;
    let mut out = vec![0.0f32; c_out * h_out * w_out];
    for co in 0..c_out {
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut acc = 0.0f64;
                for ci in 0..c_in {
                    for ky in 0..kh {
                        // Signed arithmetic: padding can put the tap off-grid.
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let iv = input.data[(ci * h + iy as usize) * w + ix as usize];
                            let kv = kernels.data[((co * c_in + ci) * kh + ky) * kw + kx];
                            acc += f64::from(iv) * f64::from(kv);
                        }
                    }
                }
                out[(co * h_out + oy) * w_out + ox] = acc as f32;
            }
        }
    }
    Tensor::new(Shape::new(vec![c_out, h_out, w_out])?, out)
}

/// Elementwise max(0, x).
pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data.iter().map(|&v| v.max(0.0)).collect();
    Tensor {
        shape: x.shape.clone(),
        data,
    }
}

/// 2x2 max pool with stride 2 over a C x H x W tensor. Odd extents are padded
/// with negative infinity, so every input element can still win its window.
pub fn maxpool2(x: &Tensor) -> Result<Tensor> {
    expect_rank(x, 3, "maxpool2")?;
    let [c, h, w] = [x.shape.dims()[0], x.shape.dims()[1], x.shape.dims()[2]];
    let h_out = h.div_ceil(2);
    let w_out = w.div_ceil(2);
    let mut out = vec![0.0f32; c * h_out * w_out];
    for ch in 0..c {
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut best = f32::NEG_INFINITY;
                for dy in 0..2 {
                    let iy = oy * 2 + dy;
                    if iy >= h {
                        continue;
                    }
                    for dx in 0..2 {
                        let ix = ox * 2 + dx;
                        if ix >= w {
                            continue;
                        }
                        let v = x.data[(ch * h + iy) * w + ix];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[(ch * h_out + oy) * w_out + ox] = best;
            }
        }
    }
    Tensor::new(Shape::new(vec![c, h_out, w_out])?, out)
}

/// Add a bias vector: elementwise for rank-1 inputs, per leading channel for
/// rank-3 inputs.
pub fn add_bias(x: &Tensor, b: &Tensor) -> Result<Tensor> {
    expect_rank(b, 1, "bias")?;
    match x.shape.rank() {
        1 => {
            if x.shape.dims()[0] != b.shape.dims()[0] {
                return Err(Error::Dimension(format!(
                    "add_bias length mismatch: {} vs {}",
                    x.shape, b.shape
                )));
            }
            let data = x.data.iter().zip(&b.data).map(|(&v, &bv)| v + bv).collect();
            Ok(Tensor {
                shape: x.shape.clone(),
                data,
            })
        }
        3 => {
            let [c, h, w] = [x.shape.dims()[0], x.shape.dims()[1], x.shape.dims()[2]];
            if c != b.shape.dims()[0] {
                return Err(Error::Dimension(format!(
                    "add_bias channel mismatch: {} vs {}",
                    x.shape, b.shape
                )));
            }
            let mut data = x.data.clone();
            for ch in 0..c {
                let bv = b.data[ch];
                for v in &mut data[ch * h * w..(ch + 1) * h * w] {
                    *v += bv;
                }
            }
            Ok(Tensor {
                shape: x.shape.clone(),
                data,
            })
        }
        _ => Err(Error::Dimension(format!(
            "add_bias expects rank-1 or rank-3 input, got shape {}",
            x.shape
        ))),
    }
}

/// Numerically stable softmax over a rank-1 tensor. Computed with
/// max-subtraction in `f64`, so constant shifts of the input cancel exactly.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    expect_rank(logits, 1, "softmax")?;
    let max = logits
        .data
        .iter()
        .copied()
        .fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = logits
        .data
        .iter()
        .map(|&v| f64::from(v - max).exp())
        .collect();
    let sum: f64 = exps.iter().sum();
    let data = exps.iter().map(|&e| (e / sum) as f32).collect();
    Ok(Tensor {
        shape: logits.shape.clone(),
        data,
    })
}

/// Index of the largest element; ties go to the lowest index.
pub fn argmax(x: &Tensor) -> Result<usize> {
    expect_rank(x, 1, "argmax")?;
    let mut best = 0usize;
    for (i, &v) in x.data.iter().enumerate() {
        if v > x.data[best] {
            best = i;
        }
    }
    Ok(best)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn relu_is_idempotent(xs in proptest::collection::vec(-1e3f32..1e3, 1..64)) {
            let t = Tensor::vector(xs).unwrap();
            let once = relu(&t);
            let twice = relu(&once);
            prop_assert_eq!(once.data(), twice.data());
        }

        #[test]
        fn softmax_is_shift_invariant(
            xs in proptest::collection::vec(-8.0f32..8.0, 1..32),
            quarter_steps in -32i32..=32,
        ) {
            // Quarter-unit shifts keep x + c exactly representable, so the
            // comparison isolates the softmax arithmetic from input rounding.
            let c = quarter_steps as f32 * 0.25;
            let base = Tensor::vector(xs.clone()).unwrap();
            let shifted = Tensor::vector(xs.iter().map(|&x| x + c).collect()).unwrap();
            let p = softmax(&base).unwrap();
            let q = softmax(&shifted).unwrap();
            prop_assert_eq!(argmax(&p).unwrap(), argmax(&q).unwrap());
            for (a, b) in p.data().iter().zip(q.data()) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }
    }
}
