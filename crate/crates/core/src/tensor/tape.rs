use super::conv::{col2im, im2col, ConvGeometry};
use super::{Tensor, TensorError};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Parameters of one residual block: two 3x3 convolutions.
#[derive(Clone, Copy, Debug)]
pub struct ResidualWeights {
    pub conv1_w: Var,
    pub conv1_b: Var,
    pub conv2_w: Var,
    pub conv2_b: Var,
}

enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geo: ConvGeometry,
    },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    AvgPool(Var),
    Reshape(Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<T>,
    },
    ExpL1 {
        pred: Var,
        target: Vec<T>,
        beta: T,
    },
    Monotonicity {
        x: Var,
        row_len: usize,
    },
    WeightedSum(Vec<(Var, T)>),
}

/// Records a forward computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, which is a topological order of
/// the graph, so `backward` is a single reverse sweep.
pub struct Tape<T: Scalar> {
    values: Vec<Tensor<T>>,
    grads: Vec<Option<Vec<T>>>,
    needs_grad: Vec<bool>,
    ops: Vec<Op<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            grads: Vec::new(),
            needs_grad: Vec::new(),
            ops: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.values.push(value);
        self.grads.push(None);
        self.needs_grad.push(needs_grad);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    /// Records a constant input.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a trainable leaf whose gradient is kept after `backward`.
    pub fn param(&mut self, value: &Tensor<T>) -> Var {
        let mut v = value.clone();
        v.grad = None;
        self.push(v, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.values[v.0]
    }

    /// Gradient of the last `backward` loss with respect to `v`, if any flowed.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.needs_grad[v.0])
    }

    /// 2-D convolution of an `N x C x H x W` input with a `O x C x kh x kw` kernel.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var, TensorError> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let bs = self.value(b).shape().to_vec();
        if xs.len() != 4 || ws.len() != 4 || ws[1] != xs[1] {
            return Err(mismatch("conv2d", &xs, &ws));
        }
        if bs != [ws[0]] {
            return Err(mismatch("conv2d bias", &ws, &bs));
        }
        let (n, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let out_c = ws[0];
        let geo = ConvGeometry::new(c, h, wd, ws[2], ws[3], stride, pad)
            .ok_or_else(|| TensorError::InvalidArgument(format!(
                "conv2d: kernel {}x{} stride {stride} pad {pad} does not fit input {h}x{wd}",
                ws[2], ws[3]
            )))?;
        let k = geo.col_rows();
        let hw = geo.col_cols();
        let mut out = vec![T::zero(); n * out_c * hw];
        let mut col = vec![T::zero(); k * hw];
        {
            let xv = self.values[x.0].data();
            let wv = self.values[w.0].data();
            let bv = self.values[b.0].data();
            for s in 0..n {
                im2col(&geo, &xv[s * c * h * wd..(s + 1) * c * h * wd], &mut col);
                let o = &mut out[s * out_c * hw..(s + 1) * out_c * hw];
                for (co, chunk) in o.chunks_mut(hw).enumerate() {
                    chunk.fill(bv[co]);
                }
                T::gemm(false, false, out_c, hw, k, T::one(), wv, &col, T::one(), o);
            }
        }
        let value = Tensor::from_vec(&[n, out_c, geo.out_h, geo.out_w], out)?;
        let ng = self.any_grad(&[x, w, b]);
        Ok(self.push(value, Op::Conv2d { x, w, b, geo }, ng))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| a.max(T::zero())).collect();
        let value = Tensor::from_vec(v.shape(), data).expect("same shape");
        let ng = self.needs_grad[x.0];
        self.push(value, Op::Relu(x), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = v
            .data()
            .iter()
            .map(|&a| T::one() / (T::one() + (-a).exp()))
            .collect();
        let value = Tensor::from_vec(v.shape(), data).expect("same shape");
        let ng = self.needs_grad[x.0];
        self.push(value, Op::Sigmoid(x), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch("add", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&p, &q)| p + q).collect();
        let value = Tensor::from_vec(va.shape(), data)?;
        let ng = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    /// Global average over the spatial axes: `N x C x H x W -> N x C x 1 x 1`.
    pub fn adaptive_avg_pool(&mut self, x: Var) -> Result<Var, TensorError> {
        let v = self.value(x);
        let s = v.shape();
        if s.len() != 4 || s[2] * s[3] == 0 {
            return Err(TensorError::InvalidArgument(format!(
                "adaptive_avg_pool expects a non-empty NCHW tensor, got {s:?}"
            )));
        }
        let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
        let inv = T::one() / T::from_usize(hw).expect("size");
        let data = v.data().chunks(hw).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        let value = Tensor::from_vec(&[n, c, 1, 1], data)?;
        let ng = self.needs_grad[x.0];
        Ok(self.push(value, Op::AvgPool(x), ng))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(x).clone().reshape(shape)?;
        let ng = self.needs_grad[x.0];
        Ok(self.push(value, Op::Reshape(x), ng))
    }

    /// Fully connected layer: `x [N, in]`, `w [out, in]`, `b [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let bs = self.value(b).shape().to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(mismatch("linear", &xs, &ws));
        }
        if bs != [ws[0]] {
            return Err(mismatch("linear bias", &ws, &bs));
        }
        let (n, inp, out) = (xs[0], xs[1], ws[0]);
        let mut y = Vec::with_capacity(n * out);
        for _ in 0..n {
            y.extend_from_slice(self.values[b.0].data());
        }
        T::gemm(
            false,
            true,
            n,
            out,
            inp,
            T::one(),
            self.values[x.0].data(),
            self.values[w.0].data(),
            T::one(),
            &mut y,
        );
        let value = Tensor::from_vec(&[n, out], y)?;
        let ng = self.any_grad(&[x, w, b]);
        Ok(self.push(value, Op::Linear { x, w, b }, ng))
    }

    /// `relu(x + conv(relu(conv(x))))` with 3x3 kernels, stride 1, padding 1.
    pub fn residual_block(&mut self, x: Var, weights: &ResidualWeights) -> Result<Var, TensorError> {
        let h = self.conv2d(x, weights.conv1_w, weights.conv1_b, 1, 1)?;
        let h = self.relu(h);
        let h = self.conv2d(h, weights.conv2_w, weights.conv2_b, 1, 1)?;
        let s = self.add(x, h)?;
        Ok(self.relu(s))
    }

    /// Mean negative log-likelihood of `targets` under `softmax(logits)`.
    ///
    /// The last axis of `logits` holds the classes; every leading position is
    /// one prediction and needs one target.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, TensorError> {
        let v = self.value(logits);
        let shape = v.shape();
        let classes = *shape.last().unwrap_or(&0);
        if classes == 0 {
            return Err(TensorError::ZeroSize(shape.to_vec()));
        }
        let rows = v.len() / classes;
        if targets.len() != rows {
            return Err(mismatch("softmax_cross_entropy targets", shape, &[targets.len()]));
        }
        let mut probs = Vec::with_capacity(v.len());
        let mut total = 0.0f64;
        for (row, &t) in v.data().chunks(classes).zip(targets) {
            if t >= classes {
                return Err(TensorError::ClassOutOfRange { index: t, classes });
            }
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let exps: Vec<T> = row.iter().map(|&z| (z - max).exp()).collect();
            let sum: T = exps.iter().copied().sum();
            total += (sum.ln() + max - row[t]).as_f64();
            probs.extend(exps.iter().map(|&e| e / sum));
        }
        let loss = T::from_f64_lossy(total / rows as f64);
        let ng = self.needs_grad[logits.0];
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            ng,
        ))
    }

    /// Mean of `exp(beta * |pred - target|) - 1` over all elements.
    pub fn exp_l1_loss(&mut self, pred: Var, target: &Tensor<T>, beta: T) -> Result<Var, TensorError> {
        let v = self.value(pred);
        if v.shape() != target.shape() {
            return Err(mismatch("exp_l1_loss", v.shape(), target.shape()));
        }
        if v.is_empty() {
            return Err(TensorError::ZeroSize(v.shape().to_vec()));
        }
        let total: f64 = v
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &y)| ((beta * (p - y).abs()).exp() - T::one()).as_f64())
            .sum();
        let loss = T::from_f64_lossy(total / v.len() as f64);
        let ng = self.needs_grad[pred.0];
        Ok(self.push(
            Tensor::scalar(loss),
            Op::ExpL1 {
                pred,
                target: target.data().to_vec(),
                beta,
            },
            ng,
        ))
    }

    /// Penalty on decreasing steps along the last axis:
    /// mean over adjacent pairs of `max(current - next, 0)`, averaged over rows.
    pub fn monotonicity_loss(&mut self, x: Var) -> Result<Var, TensorError> {
        let v = self.value(x);
        let row_len = *v.shape().last().unwrap_or(&0);
        if row_len < 2 {
            return Err(TensorError::InvalidArgument(format!(
                "monotonicity_loss needs sequences of length >= 2, got {row_len}"
            )));
        }
        let rows = v.len() / row_len;
        let mut total = 0.0f64;
        for row in v.data().chunks(row_len) {
            let s: f64 = row
                .windows(2)
                .map(|p| (p[0] - p[1]).max(T::zero()).as_f64())
                .sum();
            total += s / (row_len - 1) as f64;
        }
        let loss = T::from_f64_lossy(total / rows as f64);
        let ng = self.needs_grad[x.0];
        Ok(self.push(Tensor::scalar(loss), Op::Monotonicity { x, row_len }, ng))
    }

    /// `sum_i weight_i * term_i` over scalar terms.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var, TensorError> {
        let mut total = T::zero();
        for &(v, wt) in terms {
            let t = self.value(v);
            if t.len() != 1 {
                return Err(TensorError::NotScalar(t.shape().to_vec()));
            }
            total += wt * t.data()[0];
        }
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let ng = self.any_grad(&vars);
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum(terms.to_vec()), ng))
    }

    fn accumulate(&mut self, v: Var, g: &[T]) {
        if !self.needs_grad[v.0] {
            return;
        }
        match &mut self.grads[v.0] {
            Some(buf) => {
                for (b, &x) in buf.iter_mut().zip(g) {
                    *b += x;
                }
            }
            slot @ None => *slot = Some(g.to_vec()),
        }
    }

    fn accumulate_owned(&mut self, v: Var, g: Vec<T>) {
        if !self.needs_grad[v.0] {
            return;
        }
        match &mut self.grads[v.0] {
            Some(_) => self.accumulate(v, &g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Back-propagates d(loss)/d(loss) = 1 through every recorded node.
    ///
    /// Gradients from a previous `backward` call are discarded first.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).len() != 1 {
            return Err(TensorError::NotScalar(shape));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.needs_grad[i] {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.backward_node(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn backward_node(&mut self, i: usize, g: &[T]) {
        // Ops borrow their saved state while we write input gradients.
        let op = std::mem::replace(&mut self.ops[i], Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geo } => self.backward_conv(*x, *w, *b, geo, g),
            Op::Relu(x) => {
                let gx: Vec<T> = self.values[i]
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&y, &d)| if y > T::zero() { d } else { T::zero() })
                    .collect();
                self.accumulate_owned(*x, gx);
            }
            Op::Sigmoid(x) => {
                let gx: Vec<T> = self.values[i]
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&y, &d)| d * y * (T::one() - y))
                    .collect();
                self.accumulate_owned(*x, gx);
            }
            Op::Add(a, b) => {
                self.accumulate(*a, g);
                self.accumulate(*b, g);
            }
            Op::AvgPool(x) => {
                let s = self.values[x.0].shape();
                let hw = s[2] * s[3];
                let inv = T::one() / T::from_usize(hw).expect("size");
                let mut gx = vec![T::zero(); g.len() * hw];
                for (chunk, &d) in gx.chunks_mut(hw).zip(g) {
                    chunk.fill(d * inv);
                }
                self.accumulate_owned(*x, gx);
            }
            Op::Reshape(x) => self.accumulate(*x, g),
            Op::Linear { x, w, b } => {
                let xs = self.values[x.0].shape();
                let (n, inp) = (xs[0], xs[1]);
                let out = self.values[w.0].shape()[0];
                if self.needs_grad[x.0] {
                    let mut gx = vec![T::zero(); n * inp];
                    T::gemm(false, false, n, inp, out, T::one(), g, self.values[w.0].data(), T::zero(), &mut gx);
                    self.accumulate_owned(*x, gx);
                }
                if self.needs_grad[w.0] {
                    let mut gw = vec![T::zero(); out * inp];
                    T::gemm(true, false, out, inp, n, T::one(), g, self.values[x.0].data(), T::zero(), &mut gw);
                    self.accumulate_owned(*w, gw);
                }
                if self.needs_grad[b.0] {
                    let mut gb = vec![T::zero(); out];
                    for row in g.chunks(out) {
                        for (a, &d) in gb.iter_mut().zip(row) {
                            *a += d;
                        }
                    }
                    self.accumulate_owned(*b, gb);
                }
            }
            Op::SoftmaxCrossEntropy { logits, targets, probs } => {
                let classes = probs.len() / targets.len();
                let scale = g[0] / T::from_usize(targets.len()).expect("size");
                let mut gx: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (r, &t) in targets.iter().enumerate() {
                    gx[r * classes + t] -= scale;
                }
                self.accumulate_owned(*logits, gx);
            }
            Op::ExpL1 { pred, target, beta } => {
                let m = T::from_usize(target.len()).expect("size");
                let gx: Vec<T> = self.values[pred.0]
                    .data()
                    .iter()
                    .zip(target)
                    .map(|(&p, &y)| {
                        let d = p - y;
                        if d == T::zero() {
                            // subgradient at the kink
                            T::zero()
                        } else {
                            g[0] * *beta * d.signum() * (*beta * d.abs()).exp() / m
                        }
                    })
                    .collect();
                self.accumulate_owned(*pred, gx);
            }
            Op::Monotonicity { x, row_len } => {
                let xv = self.values[x.0].data();
                let rows = xv.len() / row_len;
                let scale = g[0] / T::from_usize(rows * (row_len - 1)).expect("size");
                let mut gx = vec![T::zero(); xv.len()];
                for r in 0..rows {
                    let base = r * row_len;
                    for j in 0..row_len - 1 {
                        if xv[base + j] > xv[base + j + 1] {
                            gx[base + j] += scale;
                            gx[base + j + 1] -= scale;
                        }
                    }
                }
                self.accumulate_owned(*x, gx);
            }
            Op::WeightedSum(terms) => {
                for &(v, wt) in terms {
                    self.accumulate(v, &[g[0] * wt]);
                }
            }
        }
        self.ops[i] = op;
    }

    fn backward_conv(&mut self, x: Var, w: Var, b: Var, geo: &ConvGeometry, g: &[T]) {
        let n = self.values[x.0].shape()[0];
        let out_c = self.values[w.0].shape()[0];
        let k = geo.col_rows();
        let hw = geo.col_cols();
        let in_len = geo.channels * geo.height * geo.width;
        let (need_x, need_w, need_b) = (self.needs_grad[x.0], self.needs_grad[w.0], self.needs_grad[b.0]);

        if need_b {
            let mut gb = vec![T::zero(); out_c];
            for s in 0..n {
                for (co, chunk) in g[s * out_c * hw..(s + 1) * out_c * hw].chunks(hw).enumerate() {
                    gb[co] += chunk.iter().copied().sum::<T>();
                }
            }
            self.accumulate_owned(b, gb);
        }
        if !need_x && !need_w {
            return;
        }
        let mut col = vec![T::zero(); k * hw];
        let mut gw = vec![T::zero(); if need_w { out_c * k } else { 0 }];
        let mut gx = vec![T::zero(); if need_x { n * in_len } else { 0 }];
        {
            let xv = self.values[x.0].data();
            let wv = self.values[w.0].data();
            // stride-1 square kernels: the input gradient is a convolution of
            // the output gradient with the flipped, transposed kernel
            let flipped = if need_x { flipped_geometry(geo, out_c) } else { None };
            let wt = flipped.map(|_| flip_kernel(wv, out_c, geo));
            let mut gcol = vec![T::zero(); flipped.map_or(0, |f| f.col_rows() * f.col_cols())];
            for s in 0..n {
                let gs = &g[s * out_c * hw..(s + 1) * out_c * hw];
                if need_w {
                    im2col(geo, &xv[s * in_len..(s + 1) * in_len], &mut col);
                    T::gemm(false, true, out_c, k, hw, T::one(), gs, &col, T::one(), &mut gw);
                }
                if need_x {
                    let gxs = &mut gx[s * in_len..(s + 1) * in_len];
                    match (&flipped, &wt) {
                        (Some(f), Some(wt)) => {
                            im2col(f, gs, &mut gcol);
                            let hw_in = f.col_cols();
                            T::gemm(false, false, geo.channels, hw_in, f.col_rows(), T::one(), wt, &gcol, T::zero(), gxs);
                        }
                        _ => {
                            T::gemm(true, false, k, hw, out_c, T::one(), wv, gs, T::zero(), &mut col);
                            col2im(geo, &col, gxs);
                        }
                    }
                }
            }
        }
        if need_w {
            self.accumulate_owned(w, gw);
        }
        if need_x {
            self.accumulate_owned(x, gx);
        }
    }
}

/// Geometry of the input-gradient convolution when it has one.
fn flipped_geometry(geo: &ConvGeometry, out_c: usize) -> Option<ConvGeometry> {
    if geo.stride != 1 || geo.kernel_h != geo.kernel_w || geo.pad >= geo.kernel_h {
        return None;
    }
    let f = ConvGeometry::new(out_c, geo.out_h, geo.out_w, geo.kernel_h, geo.kernel_w, 1, geo.kernel_h - 1 - geo.pad)?;
    (f.out_h == geo.height && f.out_w == geo.width).then_some(f)
}

/// `O x C x kh x kw` kernel to `C x O x kh x kw`, rotated by 180 degrees.
fn flip_kernel<T: Scalar>(w: &[T], out_c: usize, geo: &ConvGeometry) -> Vec<T> {
    let (c, kh, kw) = (geo.channels, geo.kernel_h, geo.kernel_w);
    let mut out = vec![T::zero(); w.len()];
    for o in 0..out_c {
        for i in 0..c {
            for ky in 0..kh {
                for kx in 0..kw {
                    out[((i * out_c + o) * kh + ky) * kw + kx] = w[((o * c + i) * kh + (kh - 1 - ky)) * kw + (kw - 1 - kx)];
                }
            }
        }
    }
    out
}
