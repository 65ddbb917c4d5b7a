//! Forward and backward passes.
//!
//! Parameters and activations are stored as `f32`; every pass widens them to
//! `f64` so that all products and sums accumulate in double precision.
//! Convolutions use circular ("wrap") padding of `k / 2` on each side and are
//! evaluated as an im2col gather followed by a dense product.

use super::arch::{ArchDescriptor, ConvGeom, LayerKind};
use super::params::ParamVector;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub(crate) enum Op {
    Conv { geom: ConvGeom, gather: Vec<u32> },
    Dense { inputs: usize, outputs: usize, relu: bool },
}

pub(crate) struct Layer {
    pub name: String,
    pub op: Op,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Network with weights widened to `f64`, ready for repeated passes.
pub(crate) struct Compiled {
    pub layers: Vec<Layer>,
    pub num_classes: usize,
}

/// Input pixel index for every (output position, kernel tap) pair.
fn gather_table(g: &ConvGeom) -> Vec<u32> {
    let pad = g.kernel / 2;
    let mut t = Vec::with_capacity(g.positions() * g.kernel * g.kernel);
    for oy in 0..g.out_height() {
        for ox in 0..g.out_width() {
            for ky in 0..g.kernel {
                for kx in 0..g.kernel {
                    let iy = (oy * g.stride + ky + g.height - pad) % g.height;
                    let ix = (ox * g.stride + kx + g.width - pad) % g.width;
                    t.push((iy * g.width + ix) as u32);
                }
            }
        }
    }
    t
}

impl Compiled {
    pub fn new(params: &ParamVector, arch: &ArchDescriptor) -> Result<Self> {
        arch.validate()?;
        if params.index != ParamVector::index_for(arch) {
            return Err(Error::Size("parameter index does not match the architecture".into()));
        }
        let layers = arch
            .layers()
            .into_iter()
            .zip(&params.index)
            .map(|(spec, entry)| {
                let weight = params.values[entry.weight_range()].iter().map(|&v| v as f64).collect();
                let bias = params.values[entry.bias_range()].iter().map(|&v| v as f64).collect();
                let op = match spec.kind {
                    LayerKind::Conv(geom) => Op::Conv { geom, gather: gather_table(&geom) },
                    LayerKind::Dense { inputs, outputs, relu } => Op::Dense { inputs, outputs, relu },
                };
                Layer { name: spec.name, op, weight, bias }
            })
            .collect();
        Ok(Compiled { layers, num_classes: arch.num_classes })
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`
#[inline]
fn gemm_nn(a: &[f64], b: &[f64], out: &mut [f64], k: usize, n: usize) {
    for (a_row, o_row) in a.chunks_exact(k).zip(out.chunks_exact_mut(n)) {
        for (&av, b_row) in a_row.iter().zip(b.chunks_exact(n)) {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in o_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out[k×n] += aᵀ · d` for `a[m×k]`, `d[m×n]`.
#[inline]
fn gemm_tn(a: &[f64], d: &[f64], out: &mut [f64], k: usize, n: usize) {
    for (a_row, d_row) in a.chunks_exact(k).zip(d.chunks_exact(n)) {
        for (&av, o_row) in a_row.iter().zip(out.chunks_exact_mut(n)) {
            if av == 0.0 {
                continue;
            }
            for (o, &dv) in o_row.iter_mut().zip(d_row) {
                *o += av * dv;
            }
        }
    }
}

/// `out[m×k] = d · wᵀ` for `d[m×n]`, `w[k×n]`.
#[inline]
fn gemm_nt(d: &[f64], w: &[f64], out: &mut [f64], k: usize, n: usize) {
    for (d_row, o_row) in d.chunks_exact(n).zip(out.chunks_exact_mut(k)) {
        for (o, w_row) in o_row.iter_mut().zip(w.chunks_exact(n)) {
            *o = d_row.iter().zip(w_row).map(|(x, y)| x * y).sum();
        }
    }
}

fn im2col(input: &[f64], batch: usize, g: &ConvGeom, gather: &[u32]) -> Vec<f64> {
    let cin = g.in_channels;
    let taps = g.kernel * g.kernel;
    let in_len = g.height * g.width * cin;
    let k = g.patch_len();
    let mut out = vec![0.0; batch * g.positions() * k];
    for b in 0..batch {
        let img = &input[b * in_len..(b + 1) * in_len];
        for pos in 0..g.positions() {
            let row = &mut out[(b * g.positions() + pos) * k..][..k];
            for tap in 0..taps {
                let pix = gather[pos * taps + tap] as usize;
                row[tap * cin..(tap + 1) * cin].copy_from_slice(&img[pix * cin..(pix + 1) * cin]);
            }
        }
    }
    out
}

fn col2im(dpatch: &[f64], batch: usize, g: &ConvGeom, gather: &[u32]) -> Vec<f64> {
    let cin = g.in_channels;
    let taps = g.kernel * g.kernel;
    let in_len = g.height * g.width * cin;
    let k = g.patch_len();
    let mut out = vec![0.0; batch * in_len];
    for b in 0..batch {
        let img = &mut out[b * in_len..(b + 1) * in_len];
        for pos in 0..g.positions() {
            let row = &dpatch[(b * g.positions() + pos) * k..][..k];
            for tap in 0..taps {
                let pix = gather[pos * taps + tap] as usize;
                for (d, &s) in img[pix * cin..(pix + 1) * cin].iter_mut().zip(&row[tap * cin..]) {
                    *d += s;
                }
            }
        }
    }
    out
}

fn add_bias_relu(out: &mut [f64], bias: &[f64], relu: bool) {
    for row in out.chunks_exact_mut(bias.len()) {
        for (o, b) in row.iter_mut().zip(bias) {
            *o += b;
            if relu && *o < 0.0 {
                *o = 0.0;
            }
        }
    }
}

struct LayerCache {
    /// im2col patches (conv) or the layer input (dense).
    operand: Vec<f64>,
    output: Vec<f64>,
}

impl Compiled {
    /// Runs every layer; `keep` retains per-layer operands for a backward pass.
    fn run(&self, input: &[f64], batch: usize, keep: bool) -> (Vec<LayerCache>, Vec<f64>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        for layer in &self.layers {
            let (operand, out) = match &layer.op {
                Op::Conv { geom, gather } => {
                    let patches = im2col(&x, batch, geom, gather);
                    let mut out = vec![0.0; batch * geom.positions() * geom.out_channels];
                    gemm_nn(&patches, &layer.weight, &mut out, geom.patch_len(), geom.out_channels);
                    add_bias_relu(&mut out, &layer.bias, true);
                    (patches, out)
                }
                Op::Dense { inputs, outputs, relu } => {
                    let mut out = vec![0.0; batch * outputs];
                    gemm_nn(&x, &layer.weight, &mut out, *inputs, *outputs);
                    add_bias_relu(&mut out, &layer.bias, *relu);
                    (x, out)
                }
            };
            caches.push(LayerCache {
                operand: if keep { operand } else { Vec::new() },
                output: if keep { out.clone() } else { Vec::new() },
            });
            x = out;
        }
        (caches, x)
    }

    /// Logits for `batch` examples stored contiguously in `input`.
    pub fn logits(&self, input: &[f64], batch: usize) -> Vec<f64> {
        self.run(input, batch, false).1
    }

    /// Per-module outputs (post-activation) and logits.
    pub fn activations(&self, input: &[f64], batch: usize) -> Vec<Vec<f64>> {
        let (caches, _) = self.run(input, batch, true);
        caches.into_iter().map(|c| c.output).collect()
    }

    /// Mean cross-entropy and its gradient, laid out like the parameter vector.
    pub fn loss_and_grad(&self, input: &[f64], labels: &[usize], batch: usize) -> (f64, Vec<f64>) {
        let (caches, logits) = self.run(input, batch, true);
        let c = self.num_classes;
        let mut loss = 0.0;
        let mut delta = vec![0.0; batch * c];
        for (i, (z, &y)) in logits.chunks_exact(c).zip(labels).enumerate() {
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|v| (v - m).exp()).sum();
            let lse = m + sum.ln();
            loss += lse - z[y];
            let d = &mut delta[i * c..(i + 1) * c];
            for (dv, zv) in d.iter_mut().zip(z) {
                *dv = (zv - lse).exp() / batch as f64;
            }
            d[y] -= 1.0 / batch as f64;
        }
        loss /= batch as f64;

        let sizes: Vec<usize> = self.layers.iter().map(|l| l.weight.len() + l.bias.len()).collect();
        let mut grads: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let cache = &caches[li];
            let relu = match layer.op {
                Op::Conv { .. } => true,
                Op::Dense { relu, .. } => relu,
            };
            if relu {
                for (d, &o) in delta.iter_mut().zip(&cache.output) {
                    if o <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let (k, n) = match &layer.op {
                Op::Conv { geom, .. } => (geom.patch_len(), geom.out_channels),
                Op::Dense { inputs, outputs, .. } => (*inputs, *outputs),
            };
            let g = &mut grads[li];
            let (gw, gb) = g.split_at_mut(layer.weight.len());
            gemm_tn(&cache.operand, &delta, gw, k, n);
            for row in delta.chunks_exact(n) {
                for (b, d) in gb.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if li == 0 {
                break;
            }
            let rows = delta.len() / n;
            let mut d_operand = vec![0.0; rows * k];
            gemm_nt(&delta, &layer.weight, &mut d_operand, k, n);
            delta = match &layer.op {
                Op::Conv { geom, gather } => col2im(&d_operand, batch, geom, gather),
                Op::Dense { .. } => d_operand,
            };
        }
        (loss, grads.concat())
    }
}

fn check_batch(arch: &ArchDescriptor, batch: &Tensor) -> Result<usize> {
    let (h, w, c) = arch.input_shape;
    let s = batch.shape();
    if s.len() != 4 || s[1..] != [h, w, c] {
        return Err(Error::Size(format!("batch shape {s:?} does not match input {h}x{w}x{c}")));
    }
    Ok(s[0])
}

fn widen(data: &[f32]) -> Vec<f64> {
    data.iter().map(|&v| v as f64).collect()
}

/// Logits and per-module activations captured at each module's output.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub logits: Tensor,
    pub activations: Vec<(String, Tensor)>,
}

pub fn forward(params: &ParamVector, arch: &ArchDescriptor, batch: &Tensor) -> Result<ForwardOutput> {
    let n = check_batch(arch, batch)?;
    let net = Compiled::new(params, arch)?;
    let acts = net.activations(&widen(batch.data()), n);
    let mut activations = Vec::with_capacity(acts.len());
    for (layer, a) in net.layers.iter().zip(&acts) {
        let width = a.len() / n.max(1);
        activations.push((layer.name.clone(), Tensor::from_f64(vec![n, width], a)?));
    }
    let logits = activations.last().map(|(_, t)| t.clone()).expect("at least one layer");
    Ok(ForwardOutput { logits, activations })
}

/// Loss and gradient at parameter values given directly in `f64`, laid out as
/// `ParamVector::index_for(arch)`. Lets landscape probes step below `f32` resolution.
pub fn loss_and_grad_f64(arch: &ArchDescriptor, values: &[f64], batch: &Tensor, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    let n = check_batch(arch, batch)?;
    if labels.len() != n {
        return Err(Error::Size(format!("{} labels for a batch of {n}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= arch.num_classes) {
        return Err(Error::Domain(format!("label {bad} outside [0, {})", arch.num_classes)));
    }
    let zeros = ParamVector::zeros(arch);
    if values.len() != zeros.len() {
        return Err(Error::Size(format!("{} values for {} parameters", values.len(), zeros.len())));
    }
    let mut net = Compiled::new(&zeros, arch)?;
    for (layer, entry) in net.layers.iter_mut().zip(&zeros.index) {
        layer.weight.copy_from_slice(&values[entry.weight_range()]);
        layer.bias.copy_from_slice(&values[entry.bias_range()]);
    }
    Ok(net.loss_and_grad(&widen(batch.data()), labels, n))
}

/// Mean softmax cross-entropy over the batch and its gradient.
pub fn backward(
    params: &ParamVector,
    arch: &ArchDescriptor,
    batch: &Tensor,
    labels: &[usize],
) -> Result<(f64, ParamVector)> {
    let n = check_batch(arch, batch)?;
    if labels.len() != n {
        return Err(Error::Size(format!("{} labels for a batch of {n}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= arch.num_classes) {
        return Err(Error::Domain(format!("label {bad} outside [0, {})", arch.num_classes)));
    }
    let net = Compiled::new(params, arch)?;
    let (loss, grad) = net.loss_and_grad(&widen(batch.data()), labels, n);
    Ok((loss, params.from_f64(&grad)?))
}
