//! Hashing-based recommendation.
//!
//! Users and items are encoded as short binary codes and items are ranked by
//! Hamming distance. The crate covers the full path from a ratings file to a
//! metrics table:
//!
//! - [`dataset`]: loading, filtering, seeded splits, similarity matrices
//! - [`nn`]: dense matrices, a dropout autoencoder with manual backprop,
//!   SGD/Adam and finite-difference gradient checks
//! - [`losses`]: similarity, balance, reconstruction and factorisation losses
//! - [`models`]: CF, CFcodeReg, AECF, CCSR and the Random/Top baselines
//! - [`binarize`] and [`index`]: sign, scaled tanh and median codes, u64
//!   packing and exact Hamming top-k
//! - [`eval`]: NDCG@k, Recall@k, ST/SST gap and χ² user-group analysis
//! - [`experiment`]: config-driven pipeline behind the `hashrec` binary
//!
//! ```
//! use hashrec::binarize::sign_binarize;
//! use hashrec::index::HammingIndex;
//! use hashrec::nn::DenseMatrix;
//!
//! let items = DenseMatrix::from_rows(&[
//!     vec![1.0, -1.0, 0.5, 2.0],
//!     vec![-1.0, -1.0, -0.5, 2.0],
//!     vec![1.0, 1.0, 0.5, 2.0],
//! ])
//! .unwrap();
//! let index = HammingIndex::build(sign_binarize(&items));
//! let user = sign_binarize(&DenseMatrix::from_rows(&[vec![0.3, -0.2, 0.1, 0.9]]).unwrap());
//! let top = index.query_row(&user, 0, 2, &[]).unwrap();
//! assert_eq!((top[0].item, top[0].distance), (0, 0));
//! assert_eq!((top[1].item, top[1].distance), (2, 1));
//! ```

pub mod binarize;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod index;
pub mod losses;
pub mod models;
pub mod nn;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
