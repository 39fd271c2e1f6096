//! Model architecture descriptors.

use super::KernelError;

/// One layer of the feed-forward stack.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerDesc {
    /// Valid-padding 2-D convolution.
    Conv { out_channels: usize, kernel: usize, stride: usize },
    Relu,
    Flatten,
    Dense { out_dim: usize },
}

/// Activation shape between layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Chw(usize, usize, usize),
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Chw(c, h, w) => c * h * w,
            Shape::Flat(n) => n,
        }
    }
}

/// A small CNN/MLP description: input shape, a fixed input scale applied
/// before the first layer, the layer stack, and the class count. The final
/// layer must produce a flat vector of `classes` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArch {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    /// Fixed multiplier applied to raw pixel values before the first layer.
    /// Datasets carry `[0, 255]` pixels; classifiers train on unit-scale
    /// inputs, so the stock architectures use `1/255`. Set to `1.0` for
    /// architectures that should see raw values.
    pub input_scale: f64,
    pub layers: Vec<LayerDesc>,
    pub classes: usize,
}

impl ModelArch {
    /// The default desk-scale classifier: two small convolutions and a dense
    /// head. Trains to high accuracy on the synthetic dataset in seconds.
    pub fn tiny_conv(classes: usize) -> Self {
        Self {
            input_channels: 3,
            input_height: 32,
            input_width: 32,
            input_scale: 1.0 / 255.0,
            layers: vec![
                LayerDesc::Conv { out_channels: 8, kernel: 3, stride: 1 },
                LayerDesc::Relu,
                LayerDesc::Conv { out_channels: 16, kernel: 3, stride: 2 },
                LayerDesc::Relu,
                LayerDesc::Flatten,
                LayerDesc::Dense { out_dim: classes },
            ],
            classes,
        }
    }

    /// Shapes of every activation, input first, logits last. Errors if the
    /// layers do not chain.
    pub fn shapes(&self) -> Result<Vec<Shape>, KernelError> {
        let mut shapes =
            vec![Shape::Chw(self.input_channels, self.input_height, self.input_width)];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = *shapes.last().unwrap();
            let next = match (layer, cur) {
                (LayerDesc::Conv { out_channels, kernel, stride }, Shape::Chw(_, h, w)) => {
                    if *kernel == 0 || *stride == 0 || *kernel > h || *kernel > w {
                        return Err(KernelError::BadArch {
                            layer: i,
                            reason: format!("conv kernel {kernel} stride {stride} on {h}x{w}"),
                        });
                    }
                    let oh = (h - kernel) / stride + 1;
                    let ow = (w - kernel) / stride + 1;
                    Shape::Chw(*out_channels, oh, ow)
                }
                (LayerDesc::Conv { .. }, Shape::Flat(_)) => {
                    return Err(KernelError::BadArch {
                        layer: i,
                        reason: "conv after flatten".into(),
                    })
                }
                (LayerDesc::Relu, s) => s,
                (LayerDesc::Flatten, s) => Shape::Flat(s.len()),
                (LayerDesc::Dense { out_dim }, Shape::Flat(_)) => Shape::Flat(*out_dim),
                (LayerDesc::Dense { .. }, Shape::Chw(..)) => {
                    return Err(KernelError::BadArch {
                        layer: i,
                        reason: "dense requires a flattened input".into(),
                    })
                }
            };
            shapes.push(next);
        }
        match shapes.last() {
            Some(Shape::Flat(n)) if *n == self.classes => Ok(shapes),
            other => Err(KernelError::BadArch {
                layer: self.layers.len(),
                reason: format!("output shape {other:?} does not match {} classes", self.classes),
            }),
        }
    }

    /// Parameter count of one layer given its input shape.
    fn layer_param_count(layer: &LayerDesc, input: Shape) -> usize {
        match (layer, input) {
            (LayerDesc::Conv { out_channels, kernel, .. }, Shape::Chw(c, _, _)) => {
                out_channels * c * kernel * kernel + out_channels
            }
            (LayerDesc::Dense { out_dim }, Shape::Flat(n)) => out_dim * n + out_dim,
            _ => 0,
        }
    }

    /// Total parameter count; a pure function of the descriptor sequence.
    pub fn param_count(&self) -> Result<usize, KernelError> {
        let shapes = self.shapes()?;
        Ok(self
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, &s)| Self::layer_param_count(l, s))
            .sum())
    }

    /// Flat offsets `(start, end)` of each layer's parameter block.
    pub(crate) fn param_offsets(&self) -> Result<Vec<(usize, usize)>, KernelError> {
        let shapes = self.shapes()?;
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for (l, &s) in self.layers.iter().zip(&shapes) {
            let n = Self::layer_param_count(l, s);
            offsets.push((at, at + n));
            at += n;
        }
        Ok(offsets)
    }
}
