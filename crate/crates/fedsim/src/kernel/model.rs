//! Forward pass, cross-entropy loss, and backpropagation.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::arch::{LayerDesc, ModelArch, Shape};
use super::params::ParamVector;
use super::KernelError;
use crate::image::ImageTensor;
use crate::rng::{stream_rng, Stream};

/// He-style normal initialization: conv/dense weights drawn with
/// `std = sqrt(2 / fan_in)`, biases zero.
pub fn init_params(arch: &ModelArch, seed: u64) -> Result<ParamVector, KernelError> {
    let shapes = arch.shapes()?;
    let offsets = arch.param_offsets()?;
    let mut values = vec![0.0; arch.param_count()?];
    let mut rng = stream_rng(seed, Stream::ParamInit);
    for ((layer, &input), &(start, end)) in arch.layers.iter().zip(&shapes).zip(&offsets) {
        let (weight_count, std) = match (layer, input) {
            (LayerDesc::Conv { out_channels, kernel, .. }, Shape::Chw(c, _, _)) => {
                let fan_in = c * kernel * kernel;
                (out_channels * fan_in, (2.0 / fan_in as f64).sqrt())
            }
            (LayerDesc::Dense { out_dim }, Shape::Flat(n)) => {
                (out_dim * n, (2.0 / n as f64).sqrt())
            }
            _ => continue,
        };
        let normal = Normal::new(0.0, std).expect("std is positive");
        for v in &mut values[start..start + weight_count] {
            *v = normal.sample(&mut rng);
        }
        // biases in start+weight_count..end stay zero
        let _ = end;
    }
    Ok(ParamVector::from_vec(values))
}

fn check_inputs(
    arch: &ModelArch,
    params: &ParamVector,
    batch: &[ImageTensor],
) -> Result<(), KernelError> {
    let expected = arch.param_count()?;
    if params.len() != expected {
        return Err(KernelError::ParamLength { expected, got: params.len() });
    }
    for img in batch {
        let (c, h, w) = img.shape();
        if (c, h, w) != (arch.input_channels, arch.input_height, arch.input_width) {
            return Err(KernelError::InputShape {
                expected: (arch.input_channels, arch.input_height, arch.input_width),
                got: (c, h, w),
            });
        }
    }
    Ok(())
}

fn layer_name(i: usize, layer: &LayerDesc) -> String {
    match layer {
        LayerDesc::Conv { .. } => format!("layer {i} (conv)"),
        LayerDesc::Relu => format!("layer {i} (relu)"),
        LayerDesc::Flatten => format!("layer {i} (flatten)"),
        LayerDesc::Dense { .. } => format!("layer {i} (dense)"),
    }
}

/// Per-image forward pass keeping every intermediate activation.
/// `activations[0]` is the scaled input; `activations[i+1]` is layer `i`'s
/// output.
fn forward_cached(
    arch: &ModelArch,
    params: &ParamVector,
    shapes: &[Shape],
    offsets: &[(usize, usize)],
    img: &ImageTensor,
) -> Result<Vec<Vec<f64>>, KernelError> {
    let w = params.as_slice();
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(arch.layers.len() + 1);
    activations.push(img.as_slice().iter().map(|&v| v * arch.input_scale).collect());

    for (i, layer) in arch.layers.iter().enumerate() {
        let input = &activations[i];
        let out = match (layer, shapes[i], shapes[i + 1]) {
            (
                LayerDesc::Conv { out_channels, kernel, stride },
                Shape::Chw(ic, ih, iw),
                Shape::Chw(_, oh, ow),
            ) => {
                let (start, _) = offsets[i];
                let k = *kernel;
                let s = *stride;
                let weights = &w[start..start + out_channels * ic * k * k];
                let biases = &w[start + out_channels * ic * k * k..];
                let mut out = vec![0.0; out_channels * oh * ow];
                for oc in 0..*out_channels {
                    let w_oc = &weights[oc * ic * k * k..(oc + 1) * ic * k * k];
                    let b = biases[oc];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = b;
                            for ch in 0..ic {
                                let w_ch = &w_oc[ch * k * k..(ch + 1) * k * k];
                                let in_ch = &input[ch * ih * iw..(ch + 1) * ih * iw];
                                for ky in 0..k {
                                    let row = (oy * s + ky) * iw + ox * s;
                                    let in_row = &in_ch[row..row + k];
                                    let w_row = &w_ch[ky * k..ky * k + k];
                                    for kx in 0..k {
                                        acc += w_row[kx] * in_row[kx];
                                    }
                                }
                            }
                            out[(oc * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
                out
            }
            (LayerDesc::Relu, _, _) => input.iter().map(|&v| v.max(0.0)).collect(),
            (LayerDesc::Flatten, _, _) => input.clone(),
            (LayerDesc::Dense { out_dim }, Shape::Flat(n), _) => {
                let (start, _) = offsets[i];
                let weights = &w[start..start + out_dim * n];
                let biases = &w[start + out_dim * n..start + out_dim * n + out_dim];
                let mut out = vec![0.0; *out_dim];
                for (o, out_v) in out.iter_mut().enumerate() {
                    let w_row = &weights[o * n..(o + 1) * n];
                    let mut acc = biases[o];
                    for (wv, iv) in w_row.iter().zip(input.iter()) {
                        acc += wv * iv;
                    }
                    *out_v = acc;
                }
                out
            }
            _ => unreachable!("shapes() validated the chain"),
        };
        if !out.iter().all(|v| v.is_finite()) {
            return Err(KernelError::NonFinite { layer: layer_name(i, layer) });
        }
        activations.push(out);
    }
    Ok(activations)
}

/// Logits for a batch of images; row `i` holds the `K` class scores of
/// `batch[i]`. Deterministic given inputs.
pub fn forward(
    arch: &ModelArch,
    params: &ParamVector,
    batch: &[ImageTensor],
) -> Result<Vec<Vec<f64>>, KernelError> {
    check_inputs(arch, params, batch)?;
    let shapes = arch.shapes()?;
    let offsets = arch.param_offsets()?;
    batch
        .iter()
        .map(|img| {
            forward_cached(arch, params, &shapes, &offsets, img)
                .map(|mut acts| acts.pop().unwrap())
        })
        .collect()
}

/// Logits for a single image.
pub fn forward_image(
    arch: &ModelArch,
    params: &ParamVector,
    img: &ImageTensor,
) -> Result<Vec<f64>, KernelError> {
    let shapes = arch.shapes()?;
    let offsets = arch.param_offsets()?;
    check_inputs(arch, params, std::slice::from_ref(img))?;
    forward_cached(arch, params, &shapes, &offsets, img).map(|mut acts| acts.pop().unwrap())
}

/// Predicted class (argmax logit, ties to the lowest index).
pub fn predict(
    arch: &ModelArch,
    params: &ParamVector,
    img: &ImageTensor,
) -> Result<usize, KernelError> {
    let logits = forward_image(arch, params, img)?;
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Numerically stable softmax cross-entropy: returns the per-image loss and
/// the gradient w.r.t. the logits.
fn softmax_ce(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    let loss = max + sum.ln() - logits[label];
    let mut dlogits: Vec<f64> = exp.iter().map(|&e| e / sum).collect();
    dlogits[label] -= 1.0;
    (loss, dlogits)
}

/// Mean cross-entropy loss and its gradient over a batch.
pub fn loss_and_grad(
    arch: &ModelArch,
    params: &ParamVector,
    batch: &[ImageTensor],
    labels: &[usize],
) -> Result<(f64, ParamVector), KernelError> {
    if batch.len() != labels.len() {
        return Err(KernelError::LengthMismatch { left: batch.len(), right: labels.len() });
    }
    if batch.is_empty() {
        return Err(KernelError::EmptyBatch);
    }
    check_inputs(arch, params, batch)?;
    for &label in labels {
        if label >= arch.classes {
            return Err(KernelError::BadLabel { label, classes: arch.classes });
        }
    }

    let shapes = arch.shapes()?;
    let offsets = arch.param_offsets()?;
    let w = params.as_slice();
    let mut grad = vec![0.0; params.len()];
    let mut total_loss = 0.0;

    for (img, &label) in batch.iter().zip(labels) {
        let activations = forward_cached(arch, params, &shapes, &offsets, img)?;
        let (loss, dlogits) = softmax_ce(activations.last().unwrap(), label);
        if !loss.is_finite() {
            return Err(KernelError::NonFinite { layer: "cross-entropy".into() });
        }
        total_loss += loss;

        // Backward pass through the layer stack.
        let mut dout = dlogits;
        for (i, layer) in arch.layers.iter().enumerate().rev() {
            let input = &activations[i];
            let dout_next = match (layer, shapes[i], shapes[i + 1]) {
                (
                    LayerDesc::Conv { out_channels, kernel, stride },
                    Shape::Chw(ic, ih, iw),
                    Shape::Chw(_, oh, ow),
                ) => {
                    let (start, _) = offsets[i];
                    let k = *kernel;
                    let s = *stride;
                    let wlen = out_channels * ic * k * k;
                    let weights = &w[start..start + wlen];
                    let (dweights, rest) = grad[start..].split_at_mut(wlen);
                    let dbiases = &mut rest[..*out_channels];
                    let mut din = vec![0.0; ic * ih * iw];
                    for oc in 0..*out_channels {
                        let w_oc = &weights[oc * ic * k * k..(oc + 1) * ic * k * k];
                        let dw_oc = &mut dweights[oc * ic * k * k..(oc + 1) * ic * k * k];
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let g = dout[(oc * oh + oy) * ow + ox];
                                if g == 0.0 {
                                    continue;
                                }
                                dbiases[oc] += g;
                                for ch in 0..ic {
                                    let base = ch * ih * iw;
                                    for ky in 0..k {
                                        let row = base + (oy * s + ky) * iw + ox * s;
                                        let wrow = ch * k * k + ky * k;
                                        for kx in 0..k {
                                            dw_oc[wrow + kx] += g * input[row + kx];
                                            din[row + kx] += g * w_oc[wrow + kx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    din
                }
                (LayerDesc::Relu, _, _) => {
                    let out = &activations[i + 1];
                    dout.iter()
                        .zip(out.iter())
                        .map(|(&g, &o)| if o > 0.0 { g } else { 0.0 })
                        .collect()
                }
                (LayerDesc::Flatten, _, _) => dout,
                (LayerDesc::Dense { out_dim }, Shape::Flat(n), _) => {
                    let (start, _) = offsets[i];
                    let wlen = out_dim * n;
                    let weights = &w[start..start + wlen];
                    let (dweights, rest) = grad[start..].split_at_mut(wlen);
                    let dbiases = &mut rest[..*out_dim];
                    let mut din = vec![0.0; n];
                    for o in 0..*out_dim {
                        let g = dout[o];
                        dbiases[o] += g;
                        let w_row = &weights[o * n..(o + 1) * n];
                        let dw_row = &mut dweights[o * n..(o + 1) * n];
                        for idx in 0..n {
                            dw_row[idx] += g * input[idx];
                            din[idx] += g * w_row[idx];
                        }
                    }
                    din
                }
                _ => unreachable!("shapes() validated the chain"),
            };
            dout = dout_next;
        }
    }

    let scale = 1.0 / batch.len() as f64;
    for g in &mut grad {
        *g *= scale;
    }
    Ok((total_loss * scale, ParamVector::from_vec(grad)))
}

/// Random parameters with a given scale, for tests and probes.
pub fn random_params(arch: &ModelArch, seed: u64, scale: f64) -> Result<ParamVector, KernelError> {
    let mut rng = stream_rng(seed, Stream::ParamInit);
    let n = arch.param_count()?;
    Ok(ParamVector::from_vec((0..n).map(|_| rng.gen_range(-scale..scale)).collect()))
}
