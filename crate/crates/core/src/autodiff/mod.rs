//! Reverse-mode differentiation over dense networks, VAE primitives and Adam.

mod adam;
pub mod codec;
mod graph;
mod net;
mod vae;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use graph::{Gradients, Graph, Var};
pub(crate) use graph::bce_logit;

pub use net::{forward, forward_graph, Activation, Head, LayerSpec, Network, NetworkSpec, ParamSet, ParamVars};
pub use vae::{kl_diag_gaussian, reparameterize};

use crate::error::Result;

/// Records `build` on a fresh tape with every parameter set trainable and
/// returns the loss value together with one gradient per parameter set.
pub fn grad<F>(params: &[&ParamSet], build: F) -> Result<(f64, Vec<ParamSet>)>
where
    F: FnOnce(&mut Graph, &[ParamVars]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<ParamVars> = params.iter().map(|p| ParamVars::register(&mut g, p, true)).collect();
    let loss = build(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    let value = g.scalar(loss);
    let out = vars
        .iter()
        .zip(params)
        .map(|(v, p)| v.gradient(&grads, p))
        .collect();
    Ok((value, out))
}
