//! Minimal neural-network engine: dense tensors, 2-D valid convolution, ReLU,
//! fully-connected layers, reverse-mode gradients and minibatch SGD.
//!
//! Everything is f64 and CPU-only. Layers run on batched, row-major flat
//! buffers so the training step can push a whole minibatch through a handful
//! of tight inner loops.

use std::io::{BufRead, Write};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: expected input of {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("backward called before forward")]
    BackwardBeforeForward,
    #[error("head size must be at least 1")]
    InvalidHead,
    #[error("snapshot parse error: {0}")]
    Snapshot(String),
    #[error("snapshot i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("non-finite value in tensor")]
    NonFinite,
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, NetError> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(NetError::ShapeMismatch { expected: n, got: data.len() });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(NetError::NonFinite);
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Dot product with four independent accumulator chains so the FMA units
/// stay busy despite the floating-point reduction dependence.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for (ca, cb) in a[..chunks * 4].chunks_exact(4).zip(b[..chunks * 4].chunks_exact(4)) {
        s0 += ca[0] * cb[0];
        s1 += ca[1] * cb[1];
        s2 += ca[2] * cb[2];
        s3 += ca[3] * cb[3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// y += alpha * x.
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, &xv) in y.iter_mut().zip(x.iter()) {
        *yv += alpha * xv;
    }
}

fn init_uniform(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Valid 2-D convolution, square kernel, no padding.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub w: Vec<f64>, // [out_c][in_c][k][k]
    pub b: Vec<f64>, // [out_c]
    gw: Vec<f64>,
    gb: Vec<f64>,
    cache_col: Vec<f64>,
}

impl Conv2d {
    pub fn new(
        in_c: usize,
        in_h: usize,
        in_w: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_c * kernel * kernel;
        Conv2d {
            in_c,
            in_h,
            in_w,
            out_c,
            kernel,
            stride,
            w: init_uniform(rng, out_c * fan_in, fan_in),
            b: vec![0.0; out_c],
            gw: vec![0.0; out_c * fan_in],
            gb: vec![0.0; out_c],
            cache_col: Vec::new(),
        }
    }

    pub fn out_h(&self) -> usize {
        (self.in_h - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w - self.kernel) / self.stride + 1
    }

    fn in_dim(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    fn out_dim(&self) -> usize {
        self.out_c * self.out_h() * self.out_w()
    }

    /// Patch-matrix offsets: for row `l = (ic*k + ky)*k + kx` and column
    /// `p = oy*ow + ox`, the source index into one input sample.
    fn col_offsets(&self) -> Vec<usize> {
        let (oh, ow, k) = (self.out_h(), self.out_w(), self.kernel);
        let mut off = Vec::with_capacity(self.in_c * k * k * oh * ow);
        for ic in 0..self.in_c {
            let chan = ic * self.in_h * self.in_w;
            for ky in 0..k {
                for kx in 0..k {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            off.push(
                                chan + (oy * self.stride + ky) * self.in_w
                                    + ox * self.stride
                                    + kx,
                            );
                        }
                    }
                }
            }
        }
        off
    }

    fn forward(&mut self, input: &[f64], batch: usize) -> Vec<f64> {
        let k = self.kernel;
        let (in_dim, out_dim) = (self.in_dim(), self.out_dim());
        let ckk = self.in_c * k * k;
        let ohw = self.out_h() * self.out_w();
        let off = self.col_offsets();
        let mut out = vec![0.0; batch * out_dim];
        // lowered patch matrices, kept for the backward pass
        self.cache_col = vec![0.0; batch * ckk * ohw];
        for bi in 0..batch {
            let xin = &input[bi * in_dim..(bi + 1) * in_dim];
            let col = &mut self.cache_col[bi * ckk * ohw..(bi + 1) * ckk * ohw];
            for (c, &o) in col.iter_mut().zip(off.iter()) {
                *c = xin[o];
            }
            let xout = &mut out[bi * out_dim..(bi + 1) * out_dim];
            for oc in 0..self.out_c {
                let xrow = &mut xout[oc * ohw..(oc + 1) * ohw];
                xrow.fill(self.b[oc]);
                let wrow = &self.w[oc * ckk..(oc + 1) * ckk];
                for (l, &wv) in wrow.iter().enumerate() {
                    let crow = &col[l * ohw..(l + 1) * ohw];
                    for (x, &c) in xrow.iter_mut().zip(crow.iter()) {
                        *x += wv * c;
                    }
                }
            }
        }
        out
    }

    fn backward(&mut self, grad_out: &[f64], batch: usize) -> Vec<f64> {
        let k = self.kernel;
        let (in_dim, out_dim) = (self.in_dim(), self.out_dim());
        let ckk = self.in_c * k * k;
        let ohw = self.out_h() * self.out_w();
        let off = self.col_offsets();
        let mut grad_in = vec![0.0; batch * in_dim];
        let mut gcol = vec![0.0; ckk * ohw];
        for bi in 0..batch {
            let col = &self.cache_col[bi * ckk * ohw..(bi + 1) * ckk * ohw];
            let gout = &grad_out[bi * out_dim..(bi + 1) * out_dim];
            let gin = &mut grad_in[bi * in_dim..(bi + 1) * in_dim];
            gcol.fill(0.0);
            for oc in 0..self.out_c {
                let grow = &gout[oc * ohw..(oc + 1) * ohw];
                self.gb[oc] += grow.iter().sum::<f64>();
                let wrow = &self.w[oc * ckk..(oc + 1) * ckk];
                let gwrow = &mut self.gw[oc * ckk..(oc + 1) * ckk];
                for l in 0..ckk {
                    let crow = &col[l * ohw..(l + 1) * ohw];
                    let mut acc = 0.0;
                    for (&g, &c) in grow.iter().zip(crow.iter()) {
                        acc += g * c;
                    }
                    gwrow[l] += acc;
                    let wv = wrow[l];
                    let gc = &mut gcol[l * ohw..(l + 1) * ohw];
                    for (gcv, &g) in gc.iter_mut().zip(grow.iter()) {
                        *gcv += wv * g;
                    }
                }
            }
            // scatter the patch-matrix gradient back to input positions
            for (&g, &o) in gcol.iter().zip(off.iter()) {
                gin[o] += g;
            }
        }
        grad_in
    }
}

/// Fully-connected layer.
#[derive(Debug, Clone)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>, // [out_dim][in_dim]
    pub b: Vec<f64>,
    gw: Vec<f64>,
    gb: Vec<f64>,
    cache_in: Vec<f64>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Dense {
            in_dim,
            out_dim,
            w: init_uniform(rng, out_dim * in_dim, in_dim),
            b: vec![0.0; out_dim],
            gw: vec![0.0; out_dim * in_dim],
            gb: vec![0.0; out_dim],
            cache_in: Vec::new(),
        }
    }

    fn forward(&mut self, input: &[f64], batch: usize) -> Vec<f64> {
        let mut out = vec![0.0; batch * self.out_dim];
        for bi in 0..batch {
            let xin = &input[bi * self.in_dim..(bi + 1) * self.in_dim];
            let xout = &mut out[bi * self.out_dim..(bi + 1) * self.out_dim];
            for o in 0..self.out_dim {
                let wrow = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
                xout[o] = self.b[o] + dot(wrow, xin);
            }
        }
        self.cache_in = input.to_vec();
        out
    }

    fn backward(&mut self, grad_out: &[f64], batch: usize) -> Vec<f64> {
        let mut grad_in = vec![0.0; batch * self.in_dim];
        for bi in 0..batch {
            let xin = &self.cache_in[bi * self.in_dim..(bi + 1) * self.in_dim];
            let gout = &grad_out[bi * self.out_dim..(bi + 1) * self.out_dim];
            let gin = &mut grad_in[bi * self.in_dim..(bi + 1) * self.in_dim];
            for o in 0..self.out_dim {
                let g = gout[o];
                if g == 0.0 {
                    continue;
                }
                self.gb[o] += g;
                let wrow = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
                let gwrow = &mut self.gw[o * self.in_dim..(o + 1) * self.in_dim];
                axpy(g, xin, gwrow);
                axpy(g, wrow, gin);
            }
        }
        grad_in
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv(Conv2d),
    Relu { cache_out: Vec<f64> },
    Flatten,
    Fc(Dense),
}

impl Layer {
    fn forward(&mut self, input: &[f64], batch: usize) -> Vec<f64> {
        match self {
            Layer::Conv(c) => c.forward(input, batch),
            Layer::Relu { cache_out } => {
                let out: Vec<f64> = input.iter().map(|&v| v.max(0.0)).collect();
                *cache_out = out.clone();
                out
            }
            Layer::Flatten => input.to_vec(),
            Layer::Fc(d) => d.forward(input, batch),
        }
    }

    fn backward(&mut self, grad_out: &[f64], batch: usize) -> Vec<f64> {
        match self {
            Layer::Conv(c) => c.backward(grad_out, batch),
            Layer::Relu { cache_out } => grad_out
                .iter()
                .zip(cache_out.iter())
                .map(|(&g, &y)| if y > 0.0 { g } else { 0.0 })
                .collect(),
            Layer::Flatten => grad_out.to_vec(),
            Layer::Fc(d) => d.backward(grad_out, batch),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub minibatch: usize,
}

/// A layered network with reverse-mode gradients.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    in_dim: usize,
    out_dim: usize,
    forward_done: bool,
}

impl Network {
    pub fn new(layers: Vec<Layer>, in_dim: usize, out_dim: usize) -> Self {
        Network { layers, in_dim, out_dim, forward_done: false }
    }

    /// The default architecture: Conv 20@3x3 s1 -> ReLU -> Conv 40@2x2 s1 ->
    /// ReLU -> Flatten -> FC 128 -> ReLU -> FC out_dim, on a 1x6x6 input.
    pub fn default_cnn(out_dim: usize, rng: &mut impl Rng) -> Self {
        let c1 = Conv2d::new(1, 6, 6, 20, 3, 1, rng);
        let (h1, w1) = (c1.out_h(), c1.out_w()); // 4x4
        let c2 = Conv2d::new(20, h1, w1, 40, 2, 1, rng);
        let flat = 40 * c2.out_h() * c2.out_w(); // 360
        let layers = vec![
            Layer::Conv(c1),
            Layer::Relu { cache_out: Vec::new() },
            Layer::Conv(c2),
            Layer::Relu { cache_out: Vec::new() },
            Layer::Flatten,
            Layer::Fc(Dense::new(flat, 128, rng)),
            Layer::Relu { cache_out: Vec::new() },
            Layer::Fc(Dense::new(128, out_dim, rng)),
        ];
        Network::new(layers, 36, out_dim)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Batched forward pass; `input` holds `batch` samples back to back.
    /// Intermediate activations are cached for `backward`.
    pub fn forward_batch(&mut self, input: &[f64], batch: usize) -> Result<Vec<f64>, NetError> {
        if input.len() != batch * self.in_dim {
            return Err(NetError::ShapeMismatch {
                expected: batch * self.in_dim,
                got: input.len(),
            });
        }
        let mut cur = input.to_vec();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, batch);
        }
        self.forward_done = true;
        Ok(cur)
    }

    /// Single-sample forward.
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor, NetError> {
        let out = self.forward_batch(&input.data, 1)?;
        Tensor::from_vec(&[self.out_dim], out)
    }

    /// Accumulates parameter gradients from the loss gradient at the output.
    /// Gradients add up across calls until `sgd_step` clears them.
    pub fn backward_batch(&mut self, grad_out: &[f64], batch: usize) -> Result<(), NetError> {
        if !self.forward_done {
            return Err(NetError::BackwardBeforeForward);
        }
        if grad_out.len() != batch * self.out_dim {
            return Err(NetError::ShapeMismatch {
                expected: batch * self.out_dim,
                got: grad_out.len(),
            });
        }
        let mut cur = grad_out.to_vec();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur, batch);
        }
        Ok(())
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<(), NetError> {
        self.backward_batch(&grad_out.data, 1)
    }

    /// theta <- theta - lr * grad, then grads are zeroed.
    pub fn sgd_step(&mut self, cfg: &SgdConfig) {
        let lr = cfg.learning_rate;
        self.visit_params_mut(|w, g| {
            for (wv, gv) in w.iter_mut().zip(g.iter_mut()) {
                *wv -= lr * *gv;
                *gv = 0.0;
            }
        });
    }

    pub fn zero_grads(&mut self) {
        self.visit_params_mut(|_, g| g.iter_mut().for_each(|v| *v = 0.0));
    }

    fn visit_params_mut(&mut self, mut f: impl FnMut(&mut [f64], &mut [f64])) {
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    f(&mut c.w, &mut c.gw);
                    f(&mut c.b, &mut c.gb);
                }
                Layer::Fc(d) => {
                    f(&mut d.w, &mut d.gw);
                    f(&mut d.b, &mut d.gb);
                }
                _ => {}
            }
        }
    }

    /// Flat views of (param, grad) pairs, in layer order. Used by the
    /// gradient checker and the snapshot writer.
    pub fn param_slices(&self) -> Vec<(&[f64], &[f64])> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push((c.w.as_slice(), c.gw.as_slice()));
                    out.push((c.b.as_slice(), c.gb.as_slice()));
                }
                Layer::Fc(d) => {
                    out.push((d.w.as_slice(), d.gw.as_slice()));
                    out.push((d.b.as_slice(), d.gb.as_slice()));
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(c.w.as_mut_slice());
                    out.push(c.b.as_mut_slice());
                }
                Layer::Fc(d) => {
                    out.push(d.w.as_mut_slice());
                    out.push(d.b.as_mut_slice());
                }
                _ => {}
            }
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.param_slices().iter().map(|(w, _)| w.len()).sum()
    }

    /// Replaces the final FC layer with one of `new_out_dim` outputs. Rows
    /// for retained actions keep their weights; new rows are freshly
    /// initialized.
    pub fn resize_head(&mut self, new_out_dim: usize, rng: &mut impl Rng) -> Result<(), NetError> {
        if new_out_dim < 1 {
            return Err(NetError::InvalidHead);
        }
        let head = self
            .layers
            .iter_mut()
            .rev()
            .find_map(|l| match l {
                Layer::Fc(d) => Some(d),
                _ => None,
            })
            .ok_or(NetError::InvalidHead)?;
        if head.out_dim == new_out_dim {
            return Ok(());
        }
        let mut fresh = Dense::new(head.in_dim, new_out_dim, rng);
        let keep = head.out_dim.min(new_out_dim);
        for o in 0..keep {
            let src = &head.w[o * head.in_dim..(o + 1) * head.in_dim];
            fresh.w[o * head.in_dim..(o + 1) * head.in_dim].copy_from_slice(src);
            fresh.b[o] = head.b[o];
        }
        *head = fresh;
        self.out_dim = new_out_dim;
        Ok(())
    }

    /// Writes a version-tagged text snapshot: layer kinds, shapes, then
    /// row-major weights.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<(), NetError> {
        writeln!(w, "tinynet-v1 {} {} {}", self.layers.len(), self.in_dim, self.out_dim)?;
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    writeln!(
                        w,
                        "conv {} {} {} {} {} {}",
                        c.in_c, c.in_h, c.in_w, c.out_c, c.kernel, c.stride
                    )?;
                    write_floats(w, &c.w)?;
                    write_floats(w, &c.b)?;
                }
                Layer::Relu { .. } => writeln!(w, "relu")?,
                Layer::Flatten => writeln!(w, "flatten")?,
                Layer::Fc(d) => {
                    writeln!(w, "fc {} {}", d.in_dim, d.out_dim)?;
                    write_floats(w, &d.w)?;
                    write_floats(w, &d.b)?;
                }
            }
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: &mut R) -> Result<Network, NetError> {
        let mut lines = r.lines();
        let header = next_line(&mut lines)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "tinynet-v1" {
            return Err(NetError::Snapshot(format!("bad header: {header:?}")));
        }
        let n_layers: usize = parse(parts[1])?;
        let in_dim: usize = parse(parts[2])?;
        let out_dim: usize = parse(parts[3])?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let line = next_line(&mut lines)?;
            let p: Vec<&str> = line.split_whitespace().collect();
            match p[0] {
                "conv" => {
                    if p.len() != 7 {
                        return Err(NetError::Snapshot(format!("bad conv line: {line:?}")));
                    }
                    let (in_c, in_h, in_w) = (parse(p[1])?, parse(p[2])?, parse(p[3])?);
                    let (out_c, kernel, stride): (usize, usize, usize) =
                        (parse(p[4])?, parse(p[5])?, parse(p[6])?);
                    let mut c = Conv2d {
                        in_c,
                        in_h,
                        in_w,
                        out_c,
                        kernel,
                        stride,
                        w: Vec::new(),
                        b: Vec::new(),
                        gw: vec![0.0; out_c * in_c * kernel * kernel],
                        gb: vec![0.0; out_c],
                        cache_col: Vec::new(),
                    };
                    c.w = read_floats(&mut lines, out_c * in_c * kernel * kernel)?;
                    c.b = read_floats(&mut lines, out_c)?;
                    layers.push(Layer::Conv(c));
                }
                "relu" => layers.push(Layer::Relu { cache_out: Vec::new() }),
                "flatten" => layers.push(Layer::Flatten),
                "fc" => {
                    if p.len() != 3 {
                        return Err(NetError::Snapshot(format!("bad fc line: {line:?}")));
                    }
                    let (din, dout): (usize, usize) = (parse(p[1])?, parse(p[2])?);
                    let mut d = Dense {
                        in_dim: din,
                        out_dim: dout,
                        w: Vec::new(),
                        b: Vec::new(),
                        gw: vec![0.0; dout * din],
                        gb: vec![0.0; dout],
                        cache_in: Vec::new(),
                    };
                    d.w = read_floats(&mut lines, dout * din)?;
                    d.b = read_floats(&mut lines, dout)?;
                    layers.push(Layer::Fc(d));
                }
                other => return Err(NetError::Snapshot(format!("unknown layer kind {other:?}"))),
            }
        }
        Ok(Network::new(layers, in_dim, out_dim))
    }
}

fn write_floats<W: Write>(w: &mut W, vals: &[f64]) -> std::io::Result<()> {
    let mut line = String::with_capacity(vals.len() * 20);
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            line.push(' ');
        }
        line.push_str(&format!("{v}"));
    }
    writeln!(w, "{line}")
}

fn next_line<I: Iterator<Item = std::io::Result<String>>>(lines: &mut I) -> Result<String, NetError> {
    lines
        .next()
        .ok_or_else(|| NetError::Snapshot("unexpected end of file".into()))?
        .map_err(NetError::from)
}

fn read_floats<I: Iterator<Item = std::io::Result<String>>>(
    lines: &mut I,
    n: usize,
) -> Result<Vec<f64>, NetError> {
    let line = next_line(lines)?;
    let vals: Result<Vec<f64>, _> = line.split_whitespace().map(|t| t.parse::<f64>()).collect();
    let vals = vals.map_err(|e| NetError::Snapshot(e.to_string()))?;
    if vals.len() != n {
        return Err(NetError::Snapshot(format!("expected {n} values, got {}", vals.len())));
    }
    Ok(vals)
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T, NetError>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| NetError::Snapshot(format!("{e}: {s:?}")))
}

/// Central finite-difference gradient check over every parameter.
/// Returns the max relative error between analytic and numeric gradients.
///
/// Loss is 0.5 * sum(out^2) so the output gradient is simply the output.
pub fn finite_difference_check(net: &mut Network, input: &Tensor, h: f64) -> Result<f64, NetError> {
    finite_difference_check_sampled(net, input, h, usize::MAX)
}

/// Like [`finite_difference_check`], but probes at most `max_per_slice`
/// evenly spaced parameters in each weight/bias slice. Every layer's
/// backward path is still exercised; only the per-slice coverage is sampled.
pub fn finite_difference_check_sampled(
    net: &mut Network,
    input: &Tensor,
    h: f64,
    max_per_slice: usize,
) -> Result<f64, NetError> {
    let out = net.forward(input)?;
    net.zero_grads();
    net.backward(&out)?;
    let analytic: Vec<f64> = net
        .param_slices()
        .iter()
        .flat_map(|(_, g)| g.iter().copied())
        .collect::<Vec<_>>();

    let loss = |net: &mut Network, input: &Tensor| -> f64 {
        let o = net.forward(input).unwrap();
        0.5 * o.data.iter().map(|v| v * v).sum::<f64>()
    };

    let mut max_rel = 0.0f64;
    let mut base = 0;
    let n_slices = net.param_slices().len();
    for si in 0..n_slices {
        let len = net.param_slices()[si].0.len();
        let stride = (len / max_per_slice.min(len)).max(1);
        for pi in (0..len).step_by(stride) {
            let orig = net.param_slices()[si].0[pi];
            net.param_slices_mut()[si][pi] = orig + h;
            let lp = loss(net, input);
            net.param_slices_mut()[si][pi] = orig - h;
            let lm = loss(net, input);
            net.param_slices_mut()[si][pi] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic[base + pi];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            if rel > max_rel {
                max_rel = rel;
            }
        }
        base += len;
    }
    net.zero_grads();
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn default_cnn_shapes_match_layer_table() {
        let mut r = rng(1);
        let net = Network::default_cnn(34, &mut r);
        let Layer::Conv(c1) = &net.layers()[0] else { panic!() };
        assert_eq!((c1.out_c, c1.out_h(), c1.out_w()), (20, 4, 4));
        let Layer::Conv(c2) = &net.layers()[2] else { panic!() };
        assert_eq!((c2.out_c, c2.out_h(), c2.out_w()), (40, 3, 3));
        let Layer::Fc(fc1) = &net.layers()[5] else { panic!() };
        assert_eq!((fc1.in_dim, fc1.out_dim), (360, 128));
        let Layer::Fc(fc2) = &net.layers()[7] else { panic!() };
        assert_eq!((fc2.in_dim, fc2.out_dim), (128, 34));
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut r = rng(2);
        let mut net = Network::default_cnn(34, &mut r);
        for slice in net.param_slices_mut() {
            slice.iter_mut().for_each(|v| *v = 0.0);
        }
        let input = Tensor::from_vec(&[1, 6, 6], (0..36).map(|i| i as f64).collect()).unwrap();
        let out = net.forward(&input).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_neuron_fc_is_linear() {
        let mut r = rng(3);
        let mut d = Dense::new(1, 1, &mut r);
        d.w[0] = 2.5;
        d.b[0] = 0.0;
        let mut net = Network::new(vec![Layer::Fc(d)], 1, 1);
        let out = net.forward(&Tensor::from_vec(&[1], vec![3.0]).unwrap()).unwrap();
        assert_eq!(out.data[0], 7.5);
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let mut r = rng(4);
        let mut net = Network::default_cnn(34, &mut r);
        let bad = Tensor::from_vec(&[5], vec![0.0; 5]).unwrap();
        assert!(matches!(net.forward(&bad), Err(NetError::ShapeMismatch { .. })));
    }

    #[test]
    fn backward_before_forward_errors() {
        let mut r = rng(5);
        let mut net = Network::default_cnn(34, &mut r);
        let g = Tensor::zeros(&[34]);
        assert!(matches!(net.backward(&g), Err(NetError::BackwardBeforeForward)));
    }

    #[test]
    fn zero_output_grad_gives_zero_param_grads() {
        let mut r = rng(6);
        let mut net = Network::default_cnn(34, &mut r);
        let input = Tensor::from_vec(&[1, 6, 6], vec![0.3; 36]).unwrap();
        net.forward(&input).unwrap();
        net.backward(&Tensor::zeros(&[34])).unwrap();
        for (_, g) in net.param_slices() {
            assert!(g.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn relu_blocks_gradient_at_negative_preactivation() {
        let mut r = rng(7);
        // 1-in 1-out dense, relu: force a negative pre-activation.
        let mut d = Dense::new(1, 1, &mut r);
        d.w[0] = 1.0;
        d.b[0] = -5.0;
        let mut net = Network::new(
            vec![Layer::Fc(d), Layer::Relu { cache_out: Vec::new() }],
            1,
            1,
        );
        net.forward(&Tensor::from_vec(&[1], vec![1.0]).unwrap()).unwrap();
        net.backward(&Tensor::from_vec(&[1], vec![1.0]).unwrap()).unwrap();
        for (_, g) in net.param_slices() {
            assert!(g.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng(8);
        let mut net = Network::default_cnn(6, &mut r);
        let input =
            Tensor::from_vec(&[1, 6, 6], (0..36).map(|_| r.gen_range(0.0..1.0)).collect())
                .unwrap();
        let max_rel = finite_difference_check(&mut net, &input, 1e-4).unwrap();
        assert!(max_rel <= 1e-3, "max relative error {max_rel}");
    }

    #[test]
    fn sgd_step_applies_learning_rate() {
        let mut r = rng(9);
        let mut d = Dense::new(1, 1, &mut r);
        d.w[0] = 1.0;
        d.gw[0] = 2.0;
        d.b[0] = 0.0;
        let mut net = Network::new(vec![Layer::Fc(d)], 1, 1);
        net.sgd_step(&SgdConfig { learning_rate: 0.1, minibatch: 1 });
        let Layer::Fc(d) = &net.layers()[0] else { panic!() };
        assert!((d.w[0] - 0.8).abs() < 1e-15);
        // grads cleared
        assert!(net.param_slices().iter().all(|(_, g)| g.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn sgd_with_zero_lr_is_identity() {
        let mut r = rng(10);
        let mut net = Network::default_cnn(8, &mut r);
        let before: Vec<f64> =
            net.param_slices().iter().flat_map(|(w, _)| w.iter().copied()).collect();
        let input = Tensor::from_vec(&[1, 6, 6], vec![0.5; 36]).unwrap();
        let out = net.forward(&input).unwrap();
        net.backward(&out).unwrap();
        net.sgd_step(&SgdConfig { learning_rate: 0.0, minibatch: 1 });
        let after: Vec<f64> =
            net.param_slices().iter().flat_map(|(w, _)| w.iter().copied()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn sgd_converges_on_quadratic() {
        // loss (w-3)^2 from w=0, lr=0.1: w_k -> 3 geometrically.
        let mut w = 0.0f64;
        let mut steps = 0;
        while (w - 3.0).abs() > 1e-3 {
            let grad = 2.0 * (w - 3.0);
            w -= 0.1 * grad;
            steps += 1;
            assert!(steps <= 200, "did not converge in 200 steps");
        }
        // network route: single weight, input 1, target 3, same dynamics.
        let mut r = rng(11);
        let mut d = Dense::new(1, 1, &mut r);
        d.w[0] = 0.0;
        d.b[0] = 0.0;
        let mut net = Network::new(vec![Layer::Fc(d)], 1, 1);
        let x = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        for _ in 0..200 {
            let out = net.forward(&x).unwrap();
            let g = Tensor::from_vec(&[1], vec![2.0 * (out.data[0] - 3.0)]).unwrap();
            net.backward(&g).unwrap();
            net.sgd_step(&SgdConfig { learning_rate: 0.05, minibatch: 1 });
        }
        let Layer::Fc(d) = &net.layers()[0] else { panic!() };
        assert!((d.w[0] + d.b[0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn resize_head_preserves_retained_rows() {
        let mut r = rng(12);
        let mut net = Network::default_cnn(34, &mut r);
        let old_head: Vec<f64> = {
            let Layer::Fc(d) = &net.layers()[7] else { panic!() };
            d.w.clone()
        };
        net.resize_head(38, &mut r).unwrap();
        assert_eq!(net.out_dim(), 38);
        let Layer::Fc(d) = &net.layers()[7] else { panic!() };
        assert_eq!(d.out_dim, 38);
        assert_eq!(&d.w[..34 * 128], &old_head[..]);
        // forward emits the new width
        let input = Tensor::from_vec(&[1, 6, 6], vec![0.1; 36]).unwrap();
        assert_eq!(net.forward(&input).unwrap().len(), 38);
    }

    #[test]
    fn resize_head_to_same_dim_is_noop() {
        let mut r = rng(13);
        let mut net = Network::default_cnn(34, &mut r);
        let before: Vec<f64> =
            net.param_slices().iter().flat_map(|(w, _)| w.iter().copied()).collect();
        net.resize_head(34, &mut r).unwrap();
        let after: Vec<f64> =
            net.param_slices().iter().flat_map(|(w, _)| w.iter().copied()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn resize_head_rejects_zero() {
        let mut r = rng(14);
        let mut net = Network::default_cnn(34, &mut r);
        assert!(net.resize_head(0, &mut r).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let mut r = rng(15);
        let mut net = Network::default_cnn(34, &mut r);
        let mut buf = Vec::new();
        net.save(&mut buf).unwrap();
        let mut loaded = Network::load(&mut buf.as_slice()).unwrap();
        let input =
            Tensor::from_vec(&[1, 6, 6], (0..36).map(|_| r.gen_range(0.0..1.0)).collect())
                .unwrap();
        let a = net.forward(&input).unwrap();
        let b = loaded.forward(&input).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn deterministic_init_from_seed() {
        let mut r1 = rng(42);
        let mut r2 = rng(42);
        let n1 = Network::default_cnn(34, &mut r1);
        let n2 = Network::default_cnn(34, &mut r2);
        let p1: Vec<f64> = n1.param_slices().iter().flat_map(|(w, _)| w.iter().copied()).collect();
        let p2: Vec<f64> = n2.param_slices().iter().flat_map(|(w, _)| w.iter().copied()).collect();
        assert_eq!(p1, p2);
    }
}
