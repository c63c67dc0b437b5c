//! Attention-based collaborative filtering on user-item graphs.
//!
//! Ratings are loaded into a dual CSR matrix ([`data`]), factorized by masked
//! NMF into non-negative initial vectors ([`nmf`]), and connected through
//! two-hop co-rating and target-item neighborhoods ([`graph`]). For each edge
//! `(u, i)` a modified graph-attention layer embeds the user and the item from
//! their neighborhoods and an MLP predicts the rating ([`attn`]). The whole
//! model is trained end to end on squared rating error ([`train`]) and scored
//! by RMSE against an NMF baseline ([`eval`]).

pub mod attn;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod nmf;
pub mod synthetic;
pub mod train;

pub use attn::{
    aggregate, attention_coefs, embed_item_for_edge, embed_user_for_edge, predict_edge, predict_edge_raw,
    relevance, transform, update, Activation, AttentionParams, MlpParams, ModelShape, ModelState,
};
pub use config::RunConfig;
pub use data::{build_matrix, parse_ratings, split, RatingDataset, RatingFormat, RatingRecord, SparseRatings, SplitSpec};
pub use error::{GarecError, Result};
pub use eval::{crossval, evaluate, evaluate_nmf_baseline, rmse, EvalResult};
pub use graph::{CoRatingGraph, NeighborList};
pub use nmf::{factorize, masked_rmse, FactorPair, NmfConfig};
pub use train::{batch_loss, fit, gradients, step, Adam, GradientSet, TrainConfig, TrainReport};
