//! Small dense networks with explicit backpropagation.

mod adam;
pub mod dist;
pub mod gradcheck;
mod mlp;
mod policy;

pub use adam::Adam;
pub use dist::{CategoricalPolicyOutput, GaussianPolicyOutput};
pub use mlp::{sigmoid, ForwardCache, Mlp, OutputActivation};
pub use policy::{PolicyAction, PolicyDist, PolicyNet};

use rand::Rng;

use crate::error::Result;

pub const HIDDEN: [usize; 2] = [64, 64];
pub const DSA_HIDDEN: [usize; 2] = [32, 32];
pub const POLICY_FINAL_GAIN: f64 = 0.01;

/// What a network is used for; decides its architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetRole {
    Policy,
    Value,
    Dsa,
}

impl NetRole {
    pub fn tag(self) -> &'static str {
        match self {
            NetRole::Policy => "policy",
            NetRole::Value => "value",
            NetRole::Dsa => "dsa",
        }
    }

    pub fn build<R: Rng + ?Sized>(self, input: usize, output: usize, rng: &mut R) -> Result<Mlp> {
        match self {
            NetRole::Policy => Mlp::orthogonal(
                &[input, HIDDEN[0], HIDDEN[1], output],
                OutputActivation::Identity,
                POLICY_FINAL_GAIN,
                rng,
            ),
            NetRole::Value => Mlp::orthogonal(
                &[input, HIDDEN[0], HIDDEN[1], output],
                OutputActivation::Identity,
                1.0,
                rng,
            ),
            NetRole::Dsa => Mlp::orthogonal(
                &[input, DSA_HIDDEN[0], DSA_HIDDEN[1], output],
                OutputActivation::Sigmoid,
                1.0,
                rng,
            ),
        }
    }
}
