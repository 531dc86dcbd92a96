//! The flicker classification CNN: three conv(3x3, pad 1) -> ReLU ->
//! maxpool(2x2) blocks followed by a three-layer perceptron, with a
//! hand-written backward pass.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};
use crate::scalar::Real;

/// Layer sizes. [`Architecture::STANDARD`] is the deployed network; smaller
/// ones exist so tests can exercise the same code quickly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input_side: usize,
    /// Input channels followed by the output channels of each conv block.
    pub channels: [usize; 4],
    pub hidden: [usize; 2],
}

impl Architecture {
    /// 224x224x1 -> 16 -> 32 -> 64 channels, flatten 64x28x28 -> 32 -> 16 -> 2.
    pub const STANDARD: Self = Self { input_side: 224, channels: [1, 16, 32, 64], hidden: [32, 16] };

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.input_side >= 8 && self.input_side % 8 == 0,
            "input side {} must be a positive multiple of 8",
            self.input_side
        );
        ensure!(self.channels.iter().chain(&self.hidden).all(|&c| c > 0), "layer widths must be positive");
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.channels[0] * self.input_side * self.input_side
    }

    /// `(channels, side, side)` after conv block `layer`'s pooling.
    pub fn pooled_shape(&self, layer: usize) -> (usize, usize, usize) {
        let side = self.input_side >> (layer + 1);
        (self.channels[layer + 1], side, side)
    }

    pub fn flatten_len(&self) -> usize {
        let (c, h, w) = self.pooled_shape(2);
        c * h * w
    }

    pub fn dense_dims(&self) -> [(usize, usize); 3] {
        [(self.flatten_len(), self.hidden[0]), (self.hidden[0], self.hidden[1]), (self.hidden[1], 2)]
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Self::STANDARD
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    /// `out_ch x (in_ch * 9)`, kernel taps in `(channel, ky, kx)` order.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams<T> {
    arch: Architecture,
    pub convs: [Conv<T>; 3],
    pub dense: [Dense<T>; 3],
}

impl<T: Real> CnnParams<T> {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let conv = |l: usize| {
            let (i, o) = (arch.channels[l], arch.channels[l + 1]);
            Conv { in_ch: i, out_ch: o, weight: vec![T::zero(); o * i * 9], bias: vec![T::zero(); o] }
        };
        let dims = arch.dense_dims();
        let dense = |l: usize| {
            let (i, o) = dims[l];
            Dense { inputs: i, outputs: o, weight: vec![T::zero(); o * i], bias: vec![T::zero(); o] }
        };
        Ok(Self { arch, convs: [conv(0), conv(1), conv(2)], dense: [dense(0), dense(1), dense(2)] })
    }

    /// Kaiming-uniform weights (`U(-b, b)`, `b = sqrt(6 / fan_in)`) and zero
    /// biases.
    pub fn kaiming(arch: Architecture, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |w: &mut [T], fan_in: usize| {
            let bound = (6.0 / fan_in as f64).sqrt();
            for v in w {
                *v = T::from_f64_lossy(rng.gen_range(-bound..bound));
            }
        };
        for c in &mut params.convs {
            fill(&mut c.weight, c.in_ch * 9);
        }
        for d in &mut params.dense {
            fill(&mut d.weight, d.inputs);
        }
        Ok(params)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    /// Tensor names in persistence order.
    pub fn tensor_names() -> [&'static str; 12] {
        [
            "conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "conv3.weight", "conv3.bias",
            "fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias", "fc3.weight", "fc3.bias",
        ]
    }

    /// Tensor shapes in persistence order.
    pub fn tensor_shapes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(12);
        for c in &self.convs {
            out.push(vec![c.out_ch, c.in_ch, 3, 3]);
            out.push(vec![c.out_ch]);
        }
        for d in &self.dense {
            out.push(vec![d.outputs, d.inputs]);
            out.push(vec![d.outputs]);
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::with_capacity(12);
        for c in &self.convs {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        for d in &self.dense {
            out.push(&d.weight);
            out.push(&d.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::with_capacity(12);
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        for d in &mut self.dense {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(T::zero());
        }
    }

    /// Logits `(no_flicker, flicker)` for a row-major `side x side` input.
    pub fn forward(&self, input: &[T]) -> Result<[T; 2]> {
        let mut ws = Workspace::new(&self.arch);
        self.forward_with(input, &mut ws)
    }

    /// Forward pass that keeps every intermediate in `ws` for a later
    /// [`CnnParams::backward`].
    pub fn forward_with(&self, input: &[T], ws: &mut Workspace<T>) -> Result<[T; 2]> {
        let side = self.arch.input_side;
        ensure!(
            input.len() == self.arch.input_len(),
            "input has {} values, expected {}x{side}x{side}",
            input.len(),
            self.arch.channels[0]
        );
        ensure!(ws.arch == self.arch, "workspace built for a different architecture");
        let mut side = side;
        for l in 0..3 {
            let (done, rest) = ws.convs.split_at_mut(l);
            let src: &[T] = if l == 0 { input } else { &done[l - 1].pooled };
            conv_block_forward(&self.convs[l], src, side, &mut rest[0]);
            side /= 2;
        }
        for (l, layer) in self.dense.iter().enumerate() {
            let (before, after) = ws.dense.split_at_mut(l);
            let x: &[T] = if l == 0 { &ws.convs[2].pooled } else { &before[l - 1] };
            let out = &mut after[0];
            out.copy_from_slice(&layer.bias);
            T::gemm(layer.outputs, layer.inputs, 1, T::one(), &layer.weight, false, x, false, T::one(), out);
            if l < 2 {
                for v in out.iter_mut() {
                    *v = v.max(T::zero());
                }
            }
        }
        Ok([ws.dense[2][0], ws.dense[2][1]])
    }

    /// Accumulates into `grads` the gradient of the loss whose derivative
    /// with respect to the logits is `d_logits`, using intermediates left in
    /// `ws` by the preceding [`CnnParams::forward_with`].
    pub fn backward(&self, ws: &mut Workspace<T>, d_logits: [T; 2], grads: &mut CnnParams<T>) {
        ws.d_dense[2].copy_from_slice(&d_logits);
        for l in (0..3).rev() {
            let layer = &self.dense[l];
            let g = &mut grads.dense[l];
            let x: &[T] = if l == 0 { &ws.convs[2].pooled } else { &ws.dense[l - 1] };
            let dy = &ws.d_dense[l];
            for (b, &d) in g.bias.iter_mut().zip(dy.iter()) {
                *b += d;
            }
            T::gemm(layer.outputs, 1, layer.inputs, T::one(), dy, false, x, false, T::one(), &mut g.weight);
            if l > 0 {
                let (lower, upper) = ws.d_dense.split_at_mut(l);
                let dx = &mut lower[l - 1];
                T::gemm(layer.inputs, layer.outputs, 1, T::one(), &layer.weight, true, &upper[0], false, T::zero(), dx);
                for (d, &a) in dx.iter_mut().zip(ws.dense[l - 1].iter()) {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                }
            } else {
                let dx = &mut ws.d_pooled;
                T::gemm(layer.inputs, layer.outputs, 1, T::one(), &layer.weight, true, &ws.d_dense[0], false, T::zero(), dx);
            }
        }
        let mut side = self.arch.input_side >> 2;
        for l in (0..3).rev() {
            conv_block_backward(&self.convs[l], side, &mut ws.convs[l], &mut ws.d_pooled, &mut grads.convs[l], l > 0);
            side *= 2;
        }
    }

    /// Softmax cross-entropy loss for `label` (0 = no flicker, 1 = flicker);
    /// gradients are added to `grads`.
    pub fn loss_and_grad(
        &self,
        input: &[T],
        label: usize,
        ws: &mut Workspace<T>,
        grads: &mut CnnParams<T>,
    ) -> Result<(T, [T; 2])> {
        ensure!(label < 2, "label must be 0 or 1");
        let logits = self.forward_with(input, ws)?;
        let (loss, d) = cross_entropy(logits, label);
        self.backward(ws, d, grads);
        Ok((loss, logits))
    }
}

/// Loss and its gradient with respect to the logits.
pub fn cross_entropy<T: Real>(logits: [T; 2], label: usize) -> (T, [T; 2]) {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let z = e[0] + e[1];
    let p = [e[0] / z, e[1] / z];
    let loss = z.ln() + m - logits[label];
    let mut d = p;
    d[label] -= T::one();
    (loss, d)
}

/// Per-layer scratch memory for one sample.
#[derive(Debug, Clone)]
pub struct ConvScratch<T> {
    /// im2col matrix, `(in_ch * 9) x (side * side)`.
    col: Vec<T>,
    /// Post-ReLU conv output, `out_ch x side x side`.
    act: Vec<T>,
    pub pooled: Vec<T>,
    argmax: Vec<u32>,
    d_act: Vec<T>,
    d_col: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct Workspace<T> {
    arch: Architecture,
    pub convs: [ConvScratch<T>; 3],
    pub dense: [Vec<T>; 3],
    d_dense: [Vec<T>; 3],
    d_pooled: Vec<T>,
}

impl<T: Real> Workspace<T> {
    pub fn new(arch: &Architecture) -> Self {
        let conv = |l: usize| {
            let side = arch.input_side >> l;
            let (cin, cout) = (arch.channels[l], arch.channels[l + 1]);
            let n = side * side;
            ConvScratch {
                col: vec![T::zero(); cin * 9 * n],
                act: vec![T::zero(); cout * n],
                pooled: vec![T::zero(); cout * n / 4],
                argmax: vec![0; cout * n / 4],
                d_act: vec![T::zero(); cout * n],
                d_col: if l > 0 { vec![T::zero(); cin * 9 * n] } else { Vec::new() },
            }
        };
        let dims = arch.dense_dims();
        let v = |n: usize| vec![T::zero(); n];
        Self {
            arch: *arch,
            convs: [conv(0), conv(1), conv(2)],
            dense: [v(dims[0].1), v(dims[1].1), v(dims[2].1)],
            d_dense: [v(dims[0].1), v(dims[1].1), v(dims[2].1)],
            // Large enough for the pooled output of any block.
            d_pooled: v((0..3).map(|l| arch.channels[l + 1] * (arch.input_side >> (l + 1)).pow(2)).max().unwrap_or(0)),
        }
    }

    /// `(channels, height, width)` of block `layer` after pooling, derived
    /// from the buffers actually filled by the forward pass.
    pub fn pooled_shape(&self, layer: usize) -> (usize, usize, usize) {
        let c = self.arch.channels[layer + 1];
        let hw = self.convs[layer].pooled.len() / c;
        let side = (hw as f64).sqrt().round() as usize;
        (c, side, hw / side)
    }

    pub fn flattened_len(&self) -> usize {
        self.convs[2].pooled.len()
    }
}

fn im2col<T: Real>(src: &[T], channels: usize, side: usize, col: &mut [T]) {
    let n = side * side;
    for c in 0..channels {
        let plane = &src[c * n..(c + 1) * n];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((c * 9) + ky * 3 + kx) * n..][..n];
                for y in 0..side {
                    let sy = y as isize + ky as isize - 1;
                    let out = &mut row[y * side..(y + 1) * side];
                    if sy < 0 || sy >= side as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[sy as usize * side..(sy as usize + 1) * side];
                    match kx {
                        0 => {
                            out[0] = T::zero();
                            out[1..].copy_from_slice(&src_row[..side - 1]);
                        }
                        1 => out.copy_from_slice(src_row),
                        _ => {
                            out[..side - 1].copy_from_slice(&src_row[1..]);
                            out[side - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(col: &[T], channels: usize, side: usize, dst: &mut [T]) {
    let n = side * side;
    dst[..channels * n].fill(T::zero());
    for c in 0..channels {
        let plane = &mut dst[c * n..(c + 1) * n];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((c * 9) + ky * 3 + kx) * n..][..n];
                for y in 0..side {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= side as isize {
                        continue;
                    }
                    let src = &row[y * side..(y + 1) * side];
                    let out = &mut plane[sy as usize * side..(sy as usize + 1) * side];
                    match kx {
                        0 => out[..side - 1].iter_mut().zip(&src[1..]).for_each(|(o, &v)| *o += v),
                        1 => out.iter_mut().zip(src).for_each(|(o, &v)| *o += v),
                        _ => out[1..].iter_mut().zip(&src[..side - 1]).for_each(|(o, &v)| *o += v),
                    }
                }
            }
        }
    }
}

fn conv_block_forward<T: Real>(layer: &Conv<T>, src: &[T], side: usize, s: &mut ConvScratch<T>) {
    let n = side * side;
    im2col(src, layer.in_ch, side, &mut s.col);
    for (o, &b) in layer.bias.iter().enumerate() {
        s.act[o * n..(o + 1) * n].fill(b);
    }
    T::gemm(layer.out_ch, layer.in_ch * 9, n, T::one(), &layer.weight, false, &s.col, false, T::one(), &mut s.act);
    for v in s.act.iter_mut() {
        *v = v.max(T::zero());
    }
    // 2x2 max pool; ties go to the first element in scan order.
    let half = side / 2;
    for c in 0..layer.out_ch {
        let plane = &s.act[c * n..(c + 1) * n];
        for py in 0..half {
            for px in 0..half {
                let base = 2 * py * side + 2 * px;
                let mut best = base;
                for idx in [base + 1, base + side, base + side + 1] {
                    if plane[idx] > plane[best] {
                        best = idx;
                    }
                }
                let out = c * half * half + py * half + px;
                s.pooled[out] = plane[best];
                s.argmax[out] = (c * n + best) as u32;
            }
        }
    }
}

/// Consumes `d_pooled` (gradient w.r.t. this block's pooled output) and, if
/// requested, overwrites it with the gradient w.r.t. the block input.
fn conv_block_backward<T: Real>(
    layer: &Conv<T>,
    side: usize,
    s: &mut ConvScratch<T>,
    d_pooled: &mut [T],
    grads: &mut Conv<T>,
    need_input_grad: bool,
) {
    let n = side * side;
    s.d_act.fill(T::zero());
    for (i, &idx) in s.argmax.iter().enumerate() {
        let idx = idx as usize;
        if s.act[idx] > T::zero() {
            s.d_act[idx] += d_pooled[i];
        }
    }
    for (o, b) in grads.bias.iter_mut().enumerate() {
        *b += s.d_act[o * n..(o + 1) * n].iter().copied().sum::<T>();
    }
    let k = layer.in_ch * 9;
    T::gemm(layer.out_ch, n, k, T::one(), &s.d_act, false, &s.col, true, T::one(), &mut grads.weight);
    if need_input_grad {
        T::gemm(k, layer.out_ch, n, T::one(), &layer.weight, true, &s.d_act, false, T::zero(), &mut s.d_col);
        col2im(&s.d_col, layer.in_ch, side, d_pooled);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TINY: Architecture = Architecture { input_side: 16, channels: [1, 2, 3, 4], hidden: [5, 4] };

    #[test]
    fn zero_network_gives_zero_logits() {
        let p = CnnParams::<f64>::zeros(TINY).unwrap();
        let input: Vec<f64> = (0..256).map(|i| (i as f64 * 0.1).sin()).collect();
        assert_eq!(p.forward(&input).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let p = CnnParams::<f32>::zeros(TINY).unwrap();
        assert!(p.forward(&[0.0; 255]).is_err());
        assert!(Architecture { input_side: 20, ..TINY }.validate().is_err());
    }

    #[test]
    fn paper_shapes() {
        let arch = Architecture::STANDARD;
        assert_eq!(arch.pooled_shape(0), (16, 112, 112));
        assert_eq!(arch.pooled_shape(1), (32, 56, 56));
        assert_eq!(arch.pooled_shape(2), (64, 28, 28));
        assert_eq!(arch.flatten_len(), 64 * 28 * 28);
        let p = CnnParams::<f32>::zeros(arch).unwrap();
        let shapes = p.tensor_shapes();
        assert_eq!(shapes[0], vec![16, 1, 3, 3]);
        assert_eq!(shapes[2], vec![32, 16, 3, 3]);
        assert_eq!(shapes[4], vec![64, 32, 3, 3]);
        assert_eq!(shapes[6], vec![32, 64 * 28 * 28]);
        assert_eq!(shapes[8], vec![16, 32]);
        assert_eq!(shapes[10], vec![2, 16]);
    }

    #[test]
    fn single_bump_through_identity_filters() {
        // Every conv keeps only the centre tap of channel 0, so a lone
        // positive pixel survives three ReLU/pool stages unchanged and lands
        // in flatten position (y/8, x/8) of channel 0.
        let mut p = CnnParams::<f64>::zeros(TINY).unwrap();
        for c in &mut p.convs {
            c.weight[4] = 1.0; // out 0, in 0, (ky, kx) = (1, 1)
        }
        let (x, y) = (11usize, 6usize);
        let mut input = vec![0.0; 256];
        input[y * 16 + x] = 0.75;
        let d = &mut p.dense;
        let flat_idx = (y / 8) * 2 + x / 8;
        d[0].weight[flat_idx] = 2.0; // hidden 0 <- that cell
        d[1].weight[0] = 1.5;
        d[2].weight[1 * 4] = 1.0; // flicker logit <- hidden2[0]
        d[2].bias = vec![0.25, -0.5];
        let logits = p.forward(&input).unwrap();
        assert_eq!(logits, [0.25, 0.75 * 2.0 * 1.5 - 0.5]);
    }

    #[test]
    fn conv_matches_direct_sum() {
        // One conv block against a literal 3x3 zero-padded convolution.
        let arch = Architecture { input_side: 8, channels: [2, 3, 1, 1], hidden: [1, 1] };
        let p = CnnParams::<f64>::kaiming(arch, 5).unwrap();
        let input: Vec<f64> = (0..128).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.3).collect();
        let mut ws = Workspace::new(&arch);
        assert!(p.forward_with(&input[..64], &mut ws).is_err());
        let conv = &p.convs[0];
        let mut s = ws.convs[0].clone();
        conv_block_forward(conv, &input, 8, &mut s);
        for o in 0..3 {
            for y in 0..8 {
                for x in 0..8 {
                    let mut acc = conv.bias[o];
                    for c in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (sy, sx) = (y as isize + ky - 1, x as isize + kx - 1);
                                if (0..8).contains(&sy) && (0..8).contains(&sx) {
                                    let w = conv.weight[o * 18 + c * 9 + (ky * 3 + kx) as usize];
                                    acc += w * input[c * 64 + sy as usize * 8 + sx as usize];
                                }
                            }
                        }
                    }
                    let got = s.act[o * 64 + y * 8 + x];
                    assert!((got - acc.max(0.0)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let (loss, d) = cross_entropy([1.0f64, -1.0], 1);
        let p1 = (-1.0f64).exp() / (1.0f64.exp() + (-1.0f64).exp());
        assert!((loss + p1.ln()).abs() < 1e-12);
        assert!((d[1] - (p1 - 1.0)).abs() < 1e-12);
        assert!((d[0] + d[1]).abs() < 1e-12);
    }

    #[test]
    fn backprop_matches_central_differences() {
        use rand::Rng;
        let arch = Architecture { input_side: 16, channels: [1, 3, 4, 5], hidden: [6, 4] };
        let params = CnnParams::<f64>::kaiming(arch, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let input: Vec<f64> = (0..256).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut ws = Workspace::new(&arch);
        let mut grads = CnnParams::zeros(arch).unwrap();
        params.loss_and_grad(&input, 1, &mut ws, &mut grads).unwrap();
        let loss = |p: &CnnParams<f64>| cross_entropy(p.forward(&input).unwrap(), 1).0;
        let h = 1e-6;
        let mut checked = 0;
        for (t, g) in grads.tensors().iter().enumerate() {
            for _ in 0..4 {
                let i = rng.gen_range(0..g.len());
                let mut plus = params.clone();
                plus.tensors_mut()[t][i] += h;
                let mut minus = params.clone();
                minus.tensors_mut()[t][i] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let denom = numeric.abs().max(g[i].abs()).max(1e-7);
                assert!((numeric - g[i]).abs() / denom < 1e-4 || (numeric - g[i]).abs() < 1e-9,
                    "tensor {t} index {i}: numeric {numeric} vs backprop {}", g[i]);
                checked += 1;
            }
        }
        assert_eq!(checked, 48);
    }
}
