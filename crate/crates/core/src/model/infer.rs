use super::{Hyperparams, ModelError, Shape};

/// Result of shape inference for one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShape {
    pub param_count: u64,
    pub output: Shape,
    /// Forward FLOPs per sample.
    pub flops: u64,
    /// The hyperparameters with inferred input widths filled in.
    pub resolved: Hyperparams,
}

/// Infers parameter count, output shape and forward FLOPs of one layer.
///
/// A convolution `in_channels` or fully-connected `inputs` of 0 means "take it
/// from the input shape"; a nonzero value must agree with the input.
/// Fully-connected layers flatten spatial input implicitly.
pub fn infer_layer(name: &str, hyper: &Hyperparams, input: &Shape) -> Result<LayerShape, ModelError> {
    let invalid = |detail: String| ModelError::InvalidDimension {
        layer: name.to_string(),
        detail,
    };
    let mismatch = |detail: String| ModelError::ShapeMismatch {
        previous: String::new(),
        next: name.to_string(),
        detail,
    };

    match *hyper {
        Hyperparams::Convolution {
            kernel,
            in_channels,
            out_channels,
            stride,
            padding,
        } => {
            if kernel == 0 || out_channels == 0 || stride == 0 {
                return Err(invalid("kernel, output channels and stride must be positive".into()));
            }
            let Shape::Spatial {
                height,
                width,
                channels,
            } = *input
            else {
                return Err(mismatch(format!("convolution needs spatial input, got {input}")));
            };
            if in_channels != 0 && in_channels != channels {
                return Err(mismatch(format!(
                    "expects {in_channels} input channels, previous layer produces {channels}"
                )));
            }
            let (h, w) = window_output(name, height, width, kernel, stride, padding)?;
            let c_in = channels;
            let param_count = kernel * kernel * c_in * out_channels + out_channels;
            let flops = 2 * kernel * kernel * c_in * out_channels * h * w;
            Ok(LayerShape {
                param_count,
                output: Shape::spatial(h, w, out_channels),
                flops,
                resolved: Hyperparams::Convolution {
                    kernel,
                    in_channels: c_in,
                    out_channels,
                    stride,
                    padding,
                },
            })
        }
        Hyperparams::Pooling {
            window,
            stride,
            padding,
            ..
        } => {
            if window == 0 || stride == 0 {
                return Err(invalid("window and stride must be positive".into()));
            }
            let Shape::Spatial {
                height,
                width,
                channels,
            } = *input
            else {
                return Err(mismatch(format!("pooling needs spatial input, got {input}")));
            };
            let (h, w) = window_output(name, height, width, window, stride, padding)?;
            let output = Shape::spatial(h, w, channels);
            Ok(LayerShape {
                param_count: 0,
                output,
                flops: window * window * output.elems(),
                resolved: hyper.clone(),
            })
        }
        Hyperparams::FullyConnected { inputs, outputs } => {
            if outputs == 0 {
                return Err(invalid("output width must be positive".into()));
            }
            let available = input.elems();
            if inputs != 0 && inputs != available {
                return Err(mismatch(format!(
                    "expects {inputs} inputs, previous layer produces {available}"
                )));
            }
            Ok(LayerShape {
                param_count: available * outputs + outputs,
                output: Shape::Flat(outputs),
                flops: 2 * available * outputs,
                resolved: Hyperparams::FullyConnected {
                    inputs: available,
                    outputs,
                },
            })
        }
        Hyperparams::Normalization | Hyperparams::Activation | Hyperparams::ResidualAdd => {
            Ok(LayerShape {
                param_count: 0,
                output: *input,
                flops: input.elems(),
                resolved: hyper.clone(),
            })
        }
        Hyperparams::Flatten => Ok(LayerShape {
            param_count: 0,
            output: Shape::Flat(input.elems()),
            flops: 0,
            resolved: hyper.clone(),
        }),
        Hyperparams::Concat { out } => {
            if out.elems() == 0 {
                return Err(invalid("concat output must be nonempty".into()));
            }
            Ok(LayerShape {
                param_count: 0,
                output: out,
                flops: 0,
                resolved: hyper.clone(),
            })
        }
        Hyperparams::Loss => Ok(LayerShape {
            param_count: 0,
            output: Shape::Flat(0),
            flops: input.elems(),
            resolved: hyper.clone(),
        }),
        Hyperparams::Block { params, out, flops } => {
            if out.elems() == 0 {
                return Err(invalid("block output must be nonempty".into()));
            }
            Ok(LayerShape {
                param_count: params,
                output: out,
                flops,
                resolved: hyper.clone(),
            })
        }
    }
}

fn window_output(
    name: &str,
    height: u64,
    width: u64,
    window: u64,
    stride: u64,
    padding: u64,
) -> Result<(u64, u64), ModelError> {
    let (ph, pw) = (height + 2 * padding, width + 2 * padding);
    if window > ph || window > pw || stride > ph || stride > pw {
        return Err(ModelError::InvalidDimension {
            layer: name.to_string(),
            detail: format!(
                "window {window} / stride {stride} larger than padded input {ph}x{pw}"
            ),
        });
    }
    Ok(((ph - window) / stride + 1, (pw - window) / stride + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PoolMode;

    fn conv(k: u64, cin: u64, cout: u64) -> Hyperparams {
        Hyperparams::Convolution {
            kernel: k,
            in_channels: cin,
            out_channels: cout,
            stride: 1,
            padding: 1,
        }
    }

    #[test]
    fn conv_3x3_rgb_to_64() {
        let s = infer_layer("c", &conv(3, 3, 64), &Shape::spatial(224, 224, 3)).unwrap();
        assert_eq!(s.param_count, 1792);
        assert_eq!(s.output, Shape::spatial(224, 224, 64));
        assert_eq!(s.flops, 2 * 9 * 3 * 64 * 224 * 224);
    }

    #[test]
    fn fc_4096_to_1000() {
        let fc = Hyperparams::FullyConnected {
            inputs: 4096,
            outputs: 1000,
        };
        let s = infer_layer("fc", &fc, &Shape::Flat(4096)).unwrap();
        assert_eq!(s.param_count, 4_097_000);
        assert_eq!(s.flops, 2 * 4096 * 1000);
    }

    #[test]
    fn fc_flattens_spatial_input() {
        let fc = Hyperparams::FullyConnected {
            inputs: 0,
            outputs: 2,
        };
        let s = infer_layer("fc", &fc, &Shape::spatial(2, 2, 3)).unwrap();
        assert_eq!(s.param_count, 12 * 2 + 2);
        assert_eq!(
            s.resolved,
            Hyperparams::FullyConnected {
                inputs: 12,
                outputs: 2
            }
        );
    }

    #[test]
    fn max_pool_halves_spatial_dims() {
        let pool = Hyperparams::Pooling {
            window: 2,
            stride: 2,
            padding: 0,
            mode: PoolMode::Max,
        };
        let s = infer_layer("p", &pool, &Shape::spatial(8, 8, 5)).unwrap();
        assert_eq!(s.param_count, 0);
        assert_eq!(s.output, Shape::spatial(4, 4, 5));
        assert_eq!(s.output.elems(), 4 * 4 * 5);
    }

    #[test]
    fn nonpositive_dimension_rejected() {
        let err = infer_layer("c", &conv(0, 3, 8), &Shape::spatial(8, 8, 3)).unwrap_err();
        assert!(matches!(err, ModelError::InvalidDimension { .. }));
    }

    #[test]
    fn stride_beyond_padded_input_rejected() {
        let c = Hyperparams::Convolution {
            kernel: 1,
            in_channels: 3,
            out_channels: 8,
            stride: 9,
            padding: 0,
        };
        let err = infer_layer("c", &c, &Shape::spatial(4, 4, 3)).unwrap_err();
        assert!(matches!(err, ModelError::InvalidDimension { .. }));
    }

    #[test]
    fn channel_mismatch_rejected() {
        let err = infer_layer("c", &conv(3, 16, 8), &Shape::spatial(8, 8, 3)).unwrap_err();
        assert!(matches!(err, ModelError::ShapeMismatch { .. }));
    }
}
