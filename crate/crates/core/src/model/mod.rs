//! Small convolutional classifier: architecture, flat parameters, passes and SGD.

pub mod arch;
pub mod net;
pub mod optim;
pub mod params;

pub use arch::{Activation, ArchDescriptor, ConvBlock, ConvGeom, LayerKind, LayerSpec};
pub use net::{backward, forward, loss_and_grad_f64, ForwardOutput};
pub use optim::{sgd_step, Sgd};
pub use params::{ModuleParams, ModuleRef, ModuleView, ParamEntry, ParamVector};

use crate::numerics::RngStream;

/// He-scaled Gaussian conv and hidden weights, zero biases, and a uniform
/// `[-1/√fan_in, 1/√fan_in]` final classifier.
pub fn init_random(arch: &ArchDescriptor, rng: &mut RngStream) -> ParamVector {
    let mut params = ParamVector::zeros(arch);
    for (layer, entry) in arch.layers().iter().zip(params.index.clone()) {
        let fan_in = layer.fan_in() as f64;
        let weights = &mut params.values[entry.weight_range()];
        let is_classifier = matches!(layer.kind, LayerKind::Dense { relu: false, .. });
        if is_classifier {
            let bound = 1.0 / fan_in.sqrt();
            for w in weights.iter_mut() {
                *w = ((2.0 * rng.next_f64() - 1.0) * bound) as f32;
            }
        } else {
            let std = (2.0 / fan_in).sqrt();
            for w in weights.iter_mut() {
                *w = (rng.next_normal() * std) as f32;
            }
        }
    }
    params
}
