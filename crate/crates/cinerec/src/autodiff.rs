//! Minimal tape-based reverse-mode automatic differentiation with the operator
//! set the reconstruction network needs: 3x3 same-padding convolution, ReLU,
//! elementwise arithmetic, magnitude/box-filter/mean (for the SSIM loss),
//! centered FFTs and hard data consistency as fixed linear layers, and Adam.
//!
//! The engine is real-valued; complex images travel as 2 channels (re, im).
//! A tape is confined to one thread; `backward` accumulates into `grad`, so
//! callers zero gradients between steps.

use num_complex::Complex;
use rustfft::FftNum;

use crate::error::{Error, Result};
use crate::fft::fft2_centered_planes;
use crate::sampling::SamplingMask;

/// Scalar type the engine runs in. Training uses f32, gradient checks f64.
pub trait Real: num_traits::Float + FftNum + std::fmt::Display {
    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    /// C <- alpha A B + beta C with explicit strides (matrixmultiply layout).
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    fn of_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major C(m,n) <- alpha A B + beta C; `trans_*` reads the operand as the
/// transpose of its stored layout.
fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    trans_a: bool,
    b: &[T],
    trans_b: bool,
    beta: T,
    c: &mut [T],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        T::gemm_raw(m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

/// Dense real tensor of rank <= 4, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RTensor<T> {
    pub data: Vec<T>,
    pub shape: Vec<usize>,
}

impl<T: Real> RTensor<T> {
    pub fn new(data: Vec<T>, shape: Vec<usize>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(Error::Shape(format!("tensor rank must be 1..=4, got {}", shape.len())));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "tensor data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(RTensor { data, shape })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        RTensor { data: vec![T::zero(); shape.iter().product()], shape: shape.to_vec() }
    }

    pub fn scalar(v: T) -> Self {
        RTensor { data: vec![v], shape: vec![1] }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape.as_slice() {
            &[a, b, c, d] => Ok((a, b, c, d)),
            s => Err(Error::Shape(format!("expected rank-4 tensor, got shape {s:?}"))),
        }
    }

    fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[a, b, c] => Ok((a, b, c)),
            s => Err(Error::Shape(format!("expected rank-3 tensor, got shape {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Conv2d { x: usize, k: usize, b: Option<usize> },
    Conv2dSeq { x: usize, k: usize, b: Option<usize> },
    Relu { x: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Div { a: usize, b: usize },
    Scale { x: usize, c: T },
    AddScalar { x: usize },
    Magnitude { x: usize },
    BoxFilter { x: usize, win: usize },
    SumAll { x: usize },
    MeanAll { x: usize },
    SliceFrame { x: usize, t: usize },
    StackFrames { xs: Vec<usize> },
    Fft2c { x: usize, inverse: bool },
    DataConsistency { x: usize, mask: Vec<bool>, t: usize, w: usize },
}

struct Node<T> {
    value: RTensor<T>,
    // allocated lazily, and only for leaves: intermediate gradients live in
    // transient adjoint buffers during backward and are never exposed
    grad: Option<RTensor<T>>,
    op: Op<T>,
}

/// Computation tape. Node ids are indices; inputs always precede outputs, so
/// a reverse index sweep is a reverse topological order.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

const MAG_EPS: f64 = 1e-12;

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: usize) -> &RTensor<T> {
        &self.nodes[id].value
    }

    /// Accumulated gradient of a leaf. Zero until `backward` has run.
    pub fn grad(&self, id: usize) -> &RTensor<T> {
        let n = &self.nodes[id];
        assert!(matches!(n.op, Op::Leaf), "gradients are only kept for leaf nodes");
        n.grad.as_ref().unwrap()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            let Some(grad) = &mut n.grad else { continue };
            for g in &mut grad.data {
                *g = T::zero();
            }
        }
    }

    fn push(&mut self, value: RTensor<T>, op: Op<T>) -> usize {
        let grad = matches!(op, Op::Leaf).then(|| RTensor::zeros(&value.shape));
        self.nodes.push(Node { value, grad, op });
        self.nodes.len() - 1
    }

    fn check(&self, id: usize) -> Result<()> {
        if id >= self.nodes.len() {
            return Err(Error::Precondition(format!("node {id} is not on this tape")));
        }
        Ok(())
    }

    pub fn leaf(&mut self, value: RTensor<T>) -> usize {
        self.push(value, Op::Leaf)
    }

    /// 3x3 cross-correlation with zero padding 1: x (C_in,H,W), k
    /// (C_out,C_in,3,3), optional bias (C_out) -> (C_out,H,W).
    pub fn conv2d(&mut self, x: usize, k: usize, b: Option<usize>) -> Result<usize> {
        self.check(x)?;
        self.check(k)?;
        let (c_in, h, w) = self.nodes[x].value.dims3()?;
        let (c_out, kc_in, kh, kw) = self.nodes[k].value.dims4()?;
        if kh != 3 || kw != 3 {
            return Err(Error::Shape(format!("conv2d kernel must be 3x3, got {kh}x{kw}")));
        }
        if kc_in != c_in {
            return Err(Error::Shape(format!(
                "conv2d channel mismatch: input has {c_in}, kernel expects {kc_in}"
            )));
        }
        if let Some(b) = b {
            self.check(b)?;
            if self.nodes[b].value.shape != [c_out] {
                return Err(Error::Shape(format!(
                    "conv2d bias shape {:?} != [{c_out}]",
                    self.nodes[b].value.shape
                )));
            }
        }
        let col = im2col(&self.nodes[x].value.data, c_in, h, w);
        let mut out = vec![T::zero(); c_out * h * w];
        gemm(c_out, c_in * 9, h * w, T::one(), &self.nodes[k].value.data, false, &col, false, T::zero(), &mut out);
        if let Some(b) = b {
            let bias = &self.nodes[b].value.data;
            for (c, bc) in bias.iter().enumerate() {
                for v in &mut out[c * h * w..(c + 1) * h * w] {
                    *v = *v + *bc;
                }
            }
        }
        Ok(self.push(RTensor::new(out, vec![c_out, h, w])?, Op::Conv2d { x, k, b }))
    }

    /// Per-frame 3x3 convolution with shared weights, batched over time into
    /// one matrix product: x (T,C_in,H,W), k (C_out,C_in,3,3) -> (T,C_out,H,W).
    pub fn conv2d_seq(&mut self, x: usize, k: usize, b: Option<usize>) -> Result<usize> {
        self.check(x)?;
        self.check(k)?;
        let (t, c_in, h, w) = self.nodes[x].value.dims4()?;
        let (c_out, kc_in, kh, kw) = self.nodes[k].value.dims4()?;
        if kh != 3 || kw != 3 {
            return Err(Error::Shape(format!("conv2d_seq kernel must be 3x3, got {kh}x{kw}")));
        }
        if kc_in != c_in {
            return Err(Error::Shape(format!(
                "conv2d_seq channel mismatch: input has {c_in}, kernel expects {kc_in}"
            )));
        }
        if let Some(b) = b {
            self.check(b)?;
            if self.nodes[b].value.shape != [c_out] {
                return Err(Error::Shape(format!(
                    "conv2d_seq bias shape {:?} != [{c_out}]",
                    self.nodes[b].value.shape
                )));
            }
        }
        let hw = h * w;
        let n = t * hw;
        let mut col = vec![T::zero(); c_in * 9 * n];
        for f in 0..t {
            im2col_into(&self.nodes[x].value.data[f * c_in * hw..(f + 1) * c_in * hw], c_in, h, w, &mut col, n, f * hw);
        }
        let mut prod = vec![T::zero(); c_out * n];
        gemm(c_out, c_in * 9, n, T::one(), &self.nodes[k].value.data, false, &col, false, T::zero(), &mut prod);
        // (c_out, t*hw) -> (t, c_out, hw)
        let mut out = vec![T::zero(); n * c_out];
        for f in 0..t {
            for c in 0..c_out {
                out[(f * c_out + c) * hw..(f * c_out + c + 1) * hw]
                    .copy_from_slice(&prod[c * n + f * hw..c * n + (f + 1) * hw]);
            }
        }
        if let Some(b) = b {
            let bias = self.nodes[b].value.data.clone();
            for f in 0..t {
                for (c, bc) in bias.iter().enumerate() {
                    for v in &mut out[(f * c_out + c) * hw..(f * c_out + c + 1) * hw] {
                        *v = *v + *bc;
                    }
                }
            }
        }
        Ok(self.push(RTensor::new(out, vec![t, c_out, h, w])?, Op::Conv2dSeq { x, k, b }))
    }

    pub fn relu(&mut self, x: usize) -> Result<usize> {
        self.check(x)?;
        let v = &self.nodes[x].value;
        let out: Vec<T> = v.data.iter().map(|&a| if a > T::zero() { a } else { T::zero() }).collect();
        let shape = v.shape.clone();
        Ok(self.push(RTensor::new(out, shape)?, Op::Relu { x }))
    }

    fn elementwise(&mut self, a: usize, b: usize, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<usize> {
        self.check(a)?;
        self.check(b)?;
        if self.nodes[a].value.shape != self.nodes[b].value.shape {
            return Err(Error::Shape(format!(
                "elementwise shapes differ: {:?} vs {:?}",
                self.nodes[a].value.shape, self.nodes[b].value.shape
            )));
        }
        let out: Vec<T> = self.nodes[a]
            .value
            .data
            .iter()
            .zip(&self.nodes[b].value.data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.nodes[a].value.shape.clone();
        Ok(self.push(RTensor::new(out, shape)?, op))
    }

    pub fn add(&mut self, a: usize, b: usize) -> Result<usize> {
        self.elementwise(a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: usize, b: usize) -> Result<usize> {
        self.elementwise(a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: usize, b: usize) -> Result<usize> {
        self.elementwise(a, b, |x, y| x * y, Op::Mul { a, b })
    }

    pub fn div(&mut self, a: usize, b: usize) -> Result<usize> {
        self.elementwise(a, b, |x, y| x / y, Op::Div { a, b })
    }

    pub fn scale(&mut self, x: usize, c: T) -> Result<usize> {
        self.check(x)?;
        let out: Vec<T> = self.nodes[x].value.data.iter().map(|&a| a * c).collect();
        let shape = self.nodes[x].value.shape.clone();
        Ok(self.push(RTensor::new(out, shape)?, Op::Scale { x, c }))
    }

    pub fn add_scalar(&mut self, x: usize, c: T) -> Result<usize> {
        self.check(x)?;
        let out: Vec<T> = self.nodes[x].value.data.iter().map(|&a| a + c).collect();
        let shape = self.nodes[x].value.shape.clone();
        Ok(self.push(RTensor::new(out, shape)?, Op::AddScalar { x }))
    }

    /// (T,2,H,W) re/im -> (T,1,H,W) magnitude with an epsilon guard at zero.
    pub fn magnitude(&mut self, x: usize) -> Result<usize> {
        self.check(x)?;
        let (t, c, h, w) = self.nodes[x].value.dims4()?;
        if c != 2 {
            return Err(Error::Shape(format!("magnitude expects 2 channels, got {c}")));
        }
        let eps = T::of_f64(MAG_EPS);
        let v = &self.nodes[x].value.data;
        let hw = h * w;
        let mut out = vec![T::zero(); t * hw];
        for f in 0..t {
            let re = &v[f * 2 * hw..f * 2 * hw + hw];
            let im = &v[f * 2 * hw + hw..(f + 1) * 2 * hw];
            for i in 0..hw {
                out[f * hw + i] = (re[i] * re[i] + im[i] * im[i] + eps).sqrt();
            }
        }
        Ok(self.push(RTensor::new(out, vec![t, 1, h, w])?, Op::Magnitude { x }))
    }

    /// Valid-region mean filter: (T,1,H,W) -> (T,1,H-win+1,W-win+1).
    pub fn box_filter(&mut self, x: usize, win: usize) -> Result<usize> {
        self.check(x)?;
        let (t, c, h, w) = self.nodes[x].value.dims4()?;
        if c != 1 {
            return Err(Error::Shape(format!("box_filter expects 1 channel, got {c}")));
        }
        if win == 0 || h < win || w < win {
            return Err(Error::Parameter(format!("box_filter window {win} too large for ({h},{w})")));
        }
        let (oh, ow) = (h - win + 1, w - win + 1);
        let inv = T::of_f64(1.0 / (win * win) as f64);
        let v = &self.nodes[x].value.data;
        let mut out = vec![T::zero(); t * oh * ow];
        for f in 0..t {
            let src = &v[f * h * w..(f + 1) * h * w];
            let dst = &mut out[f * oh * ow..(f + 1) * oh * ow];
            for y in 0..oh {
                for xx in 0..ow {
                    let mut s = T::zero();
                    for dy in 0..win {
                        for dx in 0..win {
                            s = s + src[(y + dy) * w + (xx + dx)];
                        }
                    }
                    dst[y * ow + xx] = s * inv;
                }
            }
        }
        Ok(self.push(RTensor::new(out, vec![t, 1, oh, ow])?, Op::BoxFilter { x, win }))
    }

    pub fn sum_all(&mut self, x: usize) -> Result<usize> {
        self.check(x)?;
        let s = self.nodes[x].value.data.iter().fold(T::zero(), |a, &b| a + b);
        Ok(self.push(RTensor::scalar(s), Op::SumAll { x }))
    }

    pub fn mean_all(&mut self, x: usize) -> Result<usize> {
        self.check(x)?;
        let n = self.nodes[x].value.numel();
        let s = self.nodes[x].value.data.iter().fold(T::zero(), |a, &b| a + b);
        Ok(self.push(RTensor::scalar(s / T::of_f64(n as f64)), Op::MeanAll { x }))
    }

    /// (T,C,H,W) -> frame t as (C,H,W).
    pub fn slice_frame(&mut self, x: usize, t: usize) -> Result<usize> {
        self.check(x)?;
        let (nt, c, h, w) = self.nodes[x].value.dims4()?;
        if t >= nt {
            return Err(Error::Shape(format!("frame {t} out of range (T={nt})")));
        }
        let n = c * h * w;
        let out = self.nodes[x].value.data[t * n..(t + 1) * n].to_vec();
        Ok(self.push(RTensor::new(out, vec![c, h, w])?, Op::SliceFrame { x, t }))
    }

    /// n rank-3 tensors of identical shape -> (n,C,H,W).
    pub fn stack_frames(&mut self, xs: &[usize]) -> Result<usize> {
        if xs.is_empty() {
            return Err(Error::Shape("stack_frames needs at least one frame".into()));
        }
        for &x in xs {
            self.check(x)?;
        }
        let (c, h, w) = self.nodes[xs[0]].value.dims3()?;
        let mut out = Vec::with_capacity(xs.len() * c * h * w);
        for &x in xs {
            if self.nodes[x].value.shape != [c, h, w] {
                return Err(Error::Shape("stack_frames: inconsistent frame shapes".into()));
            }
            out.extend_from_slice(&self.nodes[x].value.data);
        }
        Ok(self.push(RTensor::new(out, vec![xs.len(), c, h, w])?, Op::StackFrames { xs: xs.to_vec() }))
    }

    /// Centered orthonormal 2D FFT over a (T,2,H,W) re/im tensor, as a fixed
    /// linear layer. The backward pass is the inverse transform (unitarity).
    pub fn fft2c_op(&mut self, x: usize, inverse: bool) -> Result<usize> {
        self.check(x)?;
        let (t, c, h, w) = self.nodes[x].value.dims4()?;
        if c != 2 {
            return Err(Error::Shape(format!("fft2c expects 2 channels, got {c}")));
        }
        let out = fft_channels(&self.nodes[x].value.data, t, h, w, inverse);
        Ok(self.push(RTensor::new(out, vec![t, 2, h, w])?, Op::Fft2c { x, inverse }))
    }

    /// Hard data consistency on k-space re/im channels: sampled phase-encode
    /// columns are replaced by `k_acq`; gradients flow only off-mask.
    pub fn data_consistency(&mut self, x: usize, k_acq: &RTensor<T>, m: &SamplingMask) -> Result<usize> {
        self.check(x)?;
        let (t, c, h, w) = self.nodes[x].value.dims4()?;
        if c != 2 {
            return Err(Error::Shape(format!("data_consistency expects 2 channels, got {c}")));
        }
        if k_acq.shape != self.nodes[x].value.shape {
            return Err(Error::Shape(format!(
                "data_consistency: acquired shape {:?} != predicted {:?}",
                k_acq.shape, self.nodes[x].value.shape
            )));
        }
        let (mt, mw) = m.dims();
        if mt != t || mw != w {
            return Err(Error::Shape(format!(
                "data_consistency: mask dims ({mt},{mw}) != (T,W)=({t},{w})"
            )));
        }
        let mut mask = vec![false; t * w];
        for ti in 0..t {
            for wi in 0..w {
                mask[ti * w + wi] = m.get(ti, wi);
            }
        }
        let mut out = self.nodes[x].value.data.clone();
        let hw = h * w;
        for f in 0..t {
            for ch in 0..2 {
                let base = (f * 2 + ch) * hw;
                for y in 0..h {
                    for xx in 0..w {
                        if mask[f * w + xx] {
                            out[base + y * w + xx] = k_acq.data[base + y * w + xx];
                        }
                    }
                }
            }
        }
        Ok(self.push(RTensor::new(out, vec![t, 2, h, w])?, Op::DataConsistency { x, mask, t, w }))
    }

    /// Reverse accumulation from a scalar loss node. Adds into `grad`, so a
    /// second call without `zero_grads` doubles every gradient.
    pub fn backward(&mut self, loss: usize) -> Result<()> {
        self.check(loss)?;
        if self.nodes[loss].value.numel() != 1 {
            return Err(Error::Precondition(format!(
                "backward needs a scalar loss, node {loss} has shape {:?}",
                self.nodes[loss].value.shape
            )));
        }
        let mut adj: Vec<Option<Vec<T>>> = (0..=loss).map(|_| None).collect();
        adj[loss] = Some(vec![T::one()]);
        for id in (0..=loss).rev() {
            let g = match adj[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(id, &g, &mut adj)?;
            if let Some(grad) = &mut self.nodes[id].grad {
                for (acc, gi) in grad.data.iter_mut().zip(&g) {
                    *acc = *acc + *gi;
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[T], adj: &mut [Option<Vec<T>>]) -> Result<()> {
        let nodes = &self.nodes;
        let mut accum = |child: usize, f: &mut dyn FnMut(&mut [T])| {
            let buf = adj[child].get_or_insert_with(|| vec![T::zero(); nodes[child].value.numel()]);
            f(buf);
        };
        match &nodes[id].op {
            Op::Leaf => {}
            Op::Conv2d { x, k, b } => {
                let (c_in, h, w) = nodes[*x].value.dims3()?;
                let c_out = nodes[*k].value.shape[0];
                let hw = h * w;
                let col = im2col(&nodes[*x].value.data, c_in, h, w);
                // dK = dY col^T
                accum(*k, &mut |gk| {
                    gemm(c_out, hw, c_in * 9, T::one(), g, false, &col, true, T::one(), gk);
                });
                // dX = conv of dY with the flipped kernel: one GEMM straight
                // into the adjoint buffer (no col2im scatter pass)
                let gcol = im2col(g, c_out, h, w);
                let kf = flip_kernel(&nodes[*k].value.data, c_out, c_in);
                accum(*x, &mut |gx| {
                    gemm(c_in, c_out * 9, hw, T::one(), &kf, false, &gcol, false, T::one(), gx);
                });
                if let Some(b) = b {
                    accum(*b, &mut |gb| {
                        for c in 0..c_out {
                            let s = g[c * hw..(c + 1) * hw].iter().fold(T::zero(), |a, &v| a + v);
                            gb[c] = gb[c] + s;
                        }
                    });
                }
            }
            Op::Conv2dSeq { x, k, b } => {
                let (t, c_in, h, w) = nodes[*x].value.dims4()?;
                let c_out = nodes[*k].value.shape[0];
                let hw = h * w;
                let n = t * hw;
                let mut col = vec![T::zero(); c_in * 9 * n];
                for f in 0..t {
                    im2col_into(&nodes[*x].value.data[f * c_in * hw..(f + 1) * c_in * hw], c_in, h, w, &mut col, n, f * hw);
                }
                // (t, c_out, hw) grad -> (c_out, t*hw)
                let mut gt = vec![T::zero(); c_out * n];
                for f in 0..t {
                    for c in 0..c_out {
                        gt[c * n + f * hw..c * n + (f + 1) * hw]
                            .copy_from_slice(&g[(f * c_out + c) * hw..(f * c_out + c + 1) * hw]);
                    }
                }
                accum(*k, &mut |gk| {
                    gemm(c_out, n, c_in * 9, T::one(), &gt, false, &col, true, T::one(), gk);
                });
                // dX as a flipped-kernel convolution of dY (same trick as
                // Conv2d), then a per-frame permute-add into the adjoint
                let mut gcol = vec![T::zero(); c_out * 9 * n];
                for f in 0..t {
                    im2col_into(&g[f * c_out * hw..(f + 1) * c_out * hw], c_out, h, w, &mut gcol, n, f * hw);
                }
                let kf = flip_kernel(&nodes[*k].value.data, c_out, c_in);
                let mut gx_t = vec![T::zero(); c_in * n];
                gemm(c_in, c_out * 9, n, T::one(), &kf, false, &gcol, false, T::zero(), &mut gx_t);
                accum(*x, &mut |gx| {
                    for f in 0..t {
                        for c in 0..c_in {
                            let dst = &mut gx[(f * c_in + c) * hw..(f * c_in + c + 1) * hw];
                            for (d, s) in dst.iter_mut().zip(&gx_t[c * n + f * hw..c * n + (f + 1) * hw]) {
                                *d = *d + *s;
                            }
                        }
                    }
                });
                if let Some(b) = b {
                    accum(*b, &mut |gb| {
                        for c in 0..c_out {
                            let mut s = T::zero();
                            for f in 0..t {
                                s = g[(f * c_out + c) * hw..(f * c_out + c + 1) * hw]
                                    .iter()
                                    .fold(s, |a, &v| a + v);
                            }
                            gb[c] = gb[c] + s;
                        }
                    });
                }
            }
            Op::Relu { x } => {
                let v = &nodes[*x].value.data;
                accum(*x, &mut |gx| {
                    for i in 0..gx.len() {
                        if v[i] > T::zero() {
                            gx[i] = gx[i] + g[i];
                        }
                    }
                });
            }
            Op::Add { a, b } => {
                accum(*a, &mut |ga| add_assign(ga, g));
                accum(*b, &mut |gb| add_assign(gb, g));
            }
            Op::Sub { a, b } => {
                accum(*a, &mut |ga| add_assign(ga, g));
                accum(*b, &mut |gb| {
                    for i in 0..gb.len() {
                        gb[i] = gb[i] - g[i];
                    }
                });
            }
            Op::Mul { a, b } => {
                let va = &nodes[*a].value.data;
                let vb = &nodes[*b].value.data;
                accum(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] = ga[i] + g[i] * vb[i];
                    }
                });
                accum(*b, &mut |gb| {
                    for i in 0..gb.len() {
                        gb[i] = gb[i] + g[i] * va[i];
                    }
                });
            }
            Op::Div { a, b } => {
                let va = &nodes[*a].value.data;
                let vb = &nodes[*b].value.data;
                accum(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] = ga[i] + g[i] / vb[i];
                    }
                });
                accum(*b, &mut |gb| {
                    for i in 0..gb.len() {
                        gb[i] = gb[i] - g[i] * va[i] / (vb[i] * vb[i]);
                    }
                });
            }
            Op::Scale { x, c } => {
                accum(*x, &mut |gx| {
                    for i in 0..gx.len() {
                        gx[i] = gx[i] + g[i] * *c;
                    }
                });
            }
            Op::AddScalar { x } => {
                accum(*x, &mut |gx| add_assign(gx, g));
            }
            Op::Magnitude { x } => {
                let (t, _, h, w) = nodes[*x].value.dims4()?;
                let hw = h * w;
                let v = &nodes[*x].value.data;
                let mag = &nodes[id].value.data;
                accum(*x, &mut |gx| {
                    for f in 0..t {
                        for i in 0..hw {
                            let m = mag[f * hw + i];
                            let gm = g[f * hw + i] / m;
                            gx[f * 2 * hw + i] = gx[f * 2 * hw + i] + gm * v[f * 2 * hw + i];
                            gx[f * 2 * hw + hw + i] = gx[f * 2 * hw + hw + i] + gm * v[f * 2 * hw + hw + i];
                        }
                    }
                });
            }
            Op::BoxFilter { x, win } => {
                let (t, _, h, w) = nodes[*x].value.dims4()?;
                let (oh, ow) = (h - win + 1, w - win + 1);
                let inv = T::of_f64(1.0 / (win * win) as f64);
                accum(*x, &mut |gx| {
                    for f in 0..t {
                        for y in 0..oh {
                            for xx in 0..ow {
                                let go = g[f * oh * ow + y * ow + xx] * inv;
                                for dy in 0..*win {
                                    for dx in 0..*win {
                                        let i = f * h * w + (y + dy) * w + (xx + dx);
                                        gx[i] = gx[i] + go;
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::SumAll { x } => {
                accum(*x, &mut |gx| {
                    for v in gx.iter_mut() {
                        *v = *v + g[0];
                    }
                });
            }
            Op::MeanAll { x } => {
                let n = T::of_f64(nodes[*x].value.numel() as f64);
                accum(*x, &mut |gx| {
                    for v in gx.iter_mut() {
                        *v = *v + g[0] / n;
                    }
                });
            }
            Op::SliceFrame { x, t } => {
                let n = nodes[id].value.numel();
                accum(*x, &mut |gx| {
                    for i in 0..n {
                        gx[t * n + i] = gx[t * n + i] + g[i];
                    }
                });
            }
            Op::StackFrames { xs } => {
                let n = nodes[xs[0]].value.numel();
                for (f, &x) in xs.iter().enumerate() {
                    accum(x, &mut |gx| add_assign(gx, &g[f * n..(f + 1) * n]));
                }
            }
            Op::Fft2c { x, inverse } => {
                // unitary linear map: J^T = representation of the conjugate
                // transpose, i.e. the opposite-direction transform
                let (t, _, h, w) = nodes[*x].value.dims4()?;
                let back = fft_channels(g, t, h, w, !inverse);
                accum(*x, &mut |gx| add_assign(gx, &back));
            }
            Op::DataConsistency { x, mask, t, w } => {
                let hw = nodes[id].value.numel() / (t * 2);
                let h = hw / w;
                accum(*x, &mut |gx| {
                    for f in 0..*t {
                        for ch in 0..2 {
                            let base = (f * 2 + ch) * hw;
                            for y in 0..h {
                                for xx in 0..*w {
                                    if !mask[f * w + xx] {
                                        gx[base + y * w + xx] = gx[base + y * w + xx] + g[base + y * w + xx];
                                    }
                                }
                            }
                        }
                    }
                });
            }
        }
        Ok(())
    }
}

fn add_assign<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = *d + *s;
    }
}

/// (T,2,H,W) channel pairs -> complex planes -> centered FFT -> channels.
fn fft_channels<T: Real>(v: &[T], t: usize, h: usize, w: usize, inverse: bool) -> Vec<T> {
    let hw = h * w;
    let mut planes = vec![Complex::new(T::zero(), T::zero()); t * hw];
    for f in 0..t {
        for i in 0..hw {
            planes[f * hw + i] = Complex::new(v[f * 2 * hw + i], v[f * 2 * hw + hw + i]);
        }
    }
    fft2_centered_planes(&mut planes, h, w, inverse);
    let mut out = vec![T::zero(); t * 2 * hw];
    for f in 0..t {
        for i in 0..hw {
            out[f * 2 * hw + i] = planes[f * hw + i].re;
            out[f * 2 * hw + hw + i] = planes[f * hw + i].im;
        }
    }
    out
}

/// Unfold 3x3 neighborhoods with zero padding 1 into `out` at column offset
/// `col0`, where each of the C*9 rows has length `row_stride`.
fn im2col_into<T: Real>(x: &[T], c_in: usize, h: usize, w: usize, out: &mut [T], row_stride: usize, col0: usize) {
    let hw = h * w;
    for c in 0..c_in {
        for dy in 0..3usize {
            for dx in 0..3usize {
                let row = (c * 9 + dy * 3 + dx) * row_stride + col0;
                for y in 0..h {
                    let sy = y as isize + dy as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = c * hw + sy as usize * w;
                    for xx in 0..w {
                        let sx = xx as isize + dx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        out[row + y * w + xx] = x[src + sx as usize];
                    }
                }
            }
        }
    }
}

/// Unfold one (C,H,W) image: -> (C*9, H*W).
fn im2col<T: Real>(x: &[T], c_in: usize, h: usize, w: usize) -> Vec<T> {
    let mut col = vec![T::zero(); c_in * 9 * h * w];
    im2col_into(x, c_in, h, w, &mut col, h * w, 0);
    col
}

/// Rearrange a (C_out, C_in, 3, 3) kernel into the (C_in, C_out*9) matrix of
/// the backward-input pass: channels swapped, both spatial offsets flipped,
/// so dX = kf x im2col(dY) in the forward im2col layout.
fn flip_kernel<T: Real>(k: &[T], c_out: usize, c_in: usize) -> Vec<T> {
    let mut kf = vec![T::zero(); c_in * c_out * 9];
    for co in 0..c_out {
        for ci in 0..c_in {
            for d in 0..9 {
                kf[ci * c_out * 9 + co * 9 + (8 - d)] = k[(co * c_in + ci) * 9 + d];
            }
        }
    }
    kf
}

/// Adam moments and hyper-parameters for one parameter list.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(param_sizes: &[usize], lr: f64) -> Self {
        AdamState {
            m: param_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: param_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over matched (param, grad, name) triples.
pub fn adam_step<T: Real>(
    params: &mut [RTensor<T>],
    grads: &[RTensor<T>],
    names: &[String],
    state: &mut AdamState<T>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != names.len() {
        return Err(Error::Shape(format!(
            "adam_step: {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let b1 = T::of_f64(state.beta1);
    let b2 = T::of_f64(state.beta2);
    let bc1 = T::of_f64(1.0 - state.beta1.powi(t));
    let bc2 = T::of_f64(1.0 - state.beta2.powi(t));
    let lr = T::of_f64(state.lr);
    let eps = T::of_f64(state.eps);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        if p.shape != g.shape {
            return Err(Error::Shape(format!(
                "adam_step: parameter '{}' shape {:?} != grad shape {:?}",
                names[i], p.shape, g.shape
            )));
        }
        if g.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("adam_step: non-finite gradient for parameter '{}'", names[i])));
        }
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for j in 0..p.data.len() {
            m[j] = b1 * m[j] + (T::one() - b1) * g.data[j];
            v[j] = b2 * v[j] + (T::one() - b2) * g.data[j] * g.data[j];
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            p.data[j] = p.data[j] - lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
