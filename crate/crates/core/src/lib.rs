//! Missing-data imputation with deep autoencoders.
//!
//! The pipeline: load IDX image/label files and scale pixels into `[0, 1]`
//! ([`dataset`]), pretrain a stack of restricted Boltzmann machines with
//! contrastive divergence ([`rbm`]), unroll the stack into a deep
//! autoencoder and fine-tune it with backpropagation ([`deepnet`]), corrupt
//! held-out samples under MCAR or MAR, then recover the missing entries by
//! minimizing the network's reconstruction error with a firefly search
//! ([`firefly`], [`imputer`]). [`evaluate`] scores the estimates against
//! ground truth and [`modelstore`] persists trained models.

pub mod dataset;
pub mod deepnet;
pub mod evaluate;
pub mod firefly;
pub mod imputer;
pub mod modelstore;
pub mod rbm;
