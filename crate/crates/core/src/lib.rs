//! Global hypoellipticity of `L = D_t + (a+ib)(t)P(D_x)` on `T¹×Tᴺ`.

pub mod classifier;
pub mod config;
pub mod const_coeff;
pub mod counterexamples;
pub mod diophantine;
pub mod mode_solver;
pub mod error;
pub mod exact;
pub mod operator;
pub mod periodic;
pub mod scaled;
pub mod symbol;
pub mod verdict;

pub use error::{Error, Result};
