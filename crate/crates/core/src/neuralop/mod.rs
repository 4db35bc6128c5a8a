//! Branch/trunk operator network with exact reverse-mode gradients.

mod mlp;
mod operator;

pub use mlp::{Dense, Mlp, MlpGrads, Tape};
pub use operator::{
    flatten_latent, latent_index, unflatten_latent, AffineMap, GridBatch, OperatorGrads, OperatorNet, BRANCH_LAYERS,
    LATENT, TRUNK_LAYERS,
};
