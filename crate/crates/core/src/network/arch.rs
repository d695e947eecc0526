use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation tensor shape (channels, height, width). Dense outputs use
/// `(units, 1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Convolution {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool {
        size: usize,
    },
    Flatten,
    FullyConnected {
        inputs: usize,
        units: usize,
    },
    Sigmoid,
}

impl LayerSpec {
    pub fn conv3x3(in_channels: usize, out_channels: usize) -> Self {
        LayerSpec::Convolution {
            in_channels,
            out_channels,
            kernel: 3,
            stride: 1,
            padding: 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Convolution { .. } => "convolution",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "max_pool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::FullyConnected { .. } => "fully_connected",
            LayerSpec::Sigmoid => "sigmoid",
        }
    }

    /// `(weight count, bias count)`.
    pub fn param_shape(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Convolution {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (out_channels * in_channels * kernel * kernel, out_channels),
            LayerSpec::FullyConnected { inputs, units } => (units * inputs, units),
            _ => (0, 0),
        }
    }

    /// Number of inputs feeding each output unit.
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Convolution {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
            LayerSpec::FullyConnected { inputs, .. } => inputs,
            _ => 0,
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let bad = |msg: String| Err(Error::Architecture(msg));
        match *self {
            LayerSpec::Convolution {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if input.c != in_channels {
                    return bad(format!(
                        "convolution expects {in_channels} channels, got {}",
                        input.c
                    ));
                }
                if kernel == 0 || stride == 0 || out_channels == 0 {
                    return bad("convolution with zero kernel, stride or channels".into());
                }
                if input.h + 2 * padding < kernel || input.w + 2 * padding < kernel {
                    return bad(format!("kernel {kernel} larger than padded input"));
                }
                Ok(Shape::new(
                    out_channels,
                    (input.h + 2 * padding - kernel) / stride + 1,
                    (input.w + 2 * padding - kernel) / stride + 1,
                ))
            }
            LayerSpec::Relu | LayerSpec::Sigmoid => Ok(input),
            LayerSpec::MaxPool { size } => {
                if size == 0 || input.h < size || input.w < size {
                    return bad(format!("pool size {size} does not fit {}x{}", input.h, input.w));
                }
                Ok(Shape::new(input.c, input.h / size, input.w / size))
            }
            LayerSpec::Flatten => Ok(Shape::new(input.len(), 1, 1)),
            LayerSpec::FullyConnected { inputs, units } => {
                if input.h != 1 || input.w != 1 {
                    return bad("fully connected layer needs a flattened input".into());
                }
                if input.c != inputs {
                    return bad(format!(
                        "fully connected layer expects {inputs} inputs, got {}",
                        input.c
                    ));
                }
                Ok(Shape::new(units, 1, 1))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Output shape of every layer; fails unless consecutive shapes compose
    /// and the network ends in a single sigmoid unit.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input;
        for layer in &self.layers {
            cur = layer.output_shape(cur)?;
            shapes.push(cur);
        }
        match (self.layers.last(), shapes.last()) {
            (Some(LayerSpec::Sigmoid), Some(s)) if s.len() == 1 => Ok(shapes),
            _ => Err(Error::Architecture(
                "network must end in a single sigmoid output".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                let (w, b) = l.param_shape();
                w + b
            })
            .sum()
    }

    pub fn input_len(&self) -> usize {
        self.input.len()
    }
}

/// Five 3×3 convolution + ReLU stages (16, 16, 32, 32, 64 channels) with 2×2
/// max pooling after the first four, then 256 → 1 fully connected layers and
/// a sigmoid, on a 1×64×64 input.
pub fn build_default_architecture() -> Architecture {
    let mut layers = Vec::new();
    let channels = [16, 16, 32, 32, 64];
    let mut in_c = 1;
    for (stage, &c) in channels.iter().enumerate() {
        layers.push(LayerSpec::conv3x3(in_c, c));
        layers.push(LayerSpec::Relu);
        if stage < 4 {
            layers.push(LayerSpec::MaxPool { size: 2 });
        }
        in_c = c;
    }
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::FullyConnected {
        inputs: 64 * 4 * 4,
        units: 256,
    });
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::FullyConnected {
        inputs: 256,
        units: 1,
    });
    layers.push(LayerSpec::Sigmoid);
    Architecture {
        input: Shape::new(1, 64, 64),
        layers,
    }
}

/// Two convolutions and one fully connected layer on a 1×16×16 input, used
/// for gradient checking.
pub fn build_reduced_architecture() -> Architecture {
    Architecture {
        input: Shape::new(1, 16, 16),
        layers: vec![
            LayerSpec::conv3x3(1, 3),
            LayerSpec::Relu,
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::conv3x3(3, 4),
            LayerSpec::Relu,
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::FullyConnected {
                inputs: 4 * 4 * 4,
                units: 1,
            },
            LayerSpec::Sigmoid,
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_composes() {
        let arch = build_default_architecture();
        let shapes = arch.shapes().unwrap();
        assert_eq!(*shapes.last().unwrap(), Shape::new(1, 1, 1));
        let convs = arch
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Convolution { .. }))
            .count();
        let fcs = arch
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::FullyConnected { .. }))
            .count();
        assert_eq!((convs, fcs), (5, 2));
    }

    #[test]
    fn default_param_count_closed_form() {
        // conv: cout*(cin*9 + 1); fc: units*(inputs + 1)
        let conv = |cin: usize, cout: usize| cout * (cin * 9 + 1);
        let expected = conv(1, 16)
            + conv(16, 16)
            + conv(16, 32)
            + conv(32, 32)
            + conv(32, 64)
            + 256 * (1024 + 1)
            + (256 + 1);
        assert_eq!(expected, 297_521);
        assert_eq!(build_default_architecture().param_count(), expected);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let mut arch = build_reduced_architecture();
        arch.layers[3] = LayerSpec::conv3x3(5, 4);
        assert!(arch.validate().is_err());
        let mut arch = build_reduced_architecture();
        arch.layers.pop();
        assert!(arch.validate().is_err());
        let mut arch = build_reduced_architecture();
        arch.layers.remove(6);
        assert!(arch.validate().is_err());
    }
}
