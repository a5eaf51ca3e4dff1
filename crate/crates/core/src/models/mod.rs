//! U-Net style generator and the pixel / patch / image discriminators.

mod discriminator;
mod generator;
mod init;

pub use discriminator::{receptive_field, DecisionMap, Discriminator, DiscriminatorSpec, DiscriminatorVariant};
pub use generator::{Generator, GeneratorSpec};

use crate::autograd::{Graph, Parameter, Var};
use crate::scalar::Scalar;

/// A network whose parameters can be bound into a [`Graph`].
pub trait Network<T: Scalar> {
    fn params(&self) -> &[Parameter<T>];

    fn params_mut(&mut self) -> &mut [Parameter<T>];

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.tensor.numel()).sum()
    }

    /// Registers every parameter as a leaf; `trainable` decides whether the
    /// leaves collect gradients.
    fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.params()
            .iter()
            .map(|p| g.leaf(p.tensor.clone().with_requires_grad(trainable)))
            .collect()
    }

    /// Copies gradients of bound leaves into the parameters' own slots.
    fn collect_grads(&mut self, g: &Graph<T>, vars: &[Var]) {
        for (p, &v) in self.params_mut().iter_mut().zip(vars) {
            if !p.tensor.requires_grad() {
                p.tensor.set_requires_grad(true);
            }
            if let Some(grad) = g.grad(v) {
                p.tensor.accumulate_grad(grad);
            }
        }
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.tensor.zero_grad();
        }
    }
}
