//! Constructive sigmoidal activation with an enumerated family of polynomial
//! pieces, and the fixed-weight two-hidden-layer network built on top of it.

pub mod activation;
pub mod enumeration;
pub mod error;
pub mod index;
pub mod kst;
pub mod network;
pub mod poly_fit;

pub use activation::{transition, PieceData, Side, Sigma, SigmaParams};
pub use enumeration::{
    calkin_wilf, calkin_wilf_index, cf_canonical, index_to_poly, poly_to_index, rational_enum,
    rational_enum_index, ContinuedFraction, MonicPoly,
};
pub use error::{Error, Result};
pub use index::PieceIndex;
pub use kst::{
    build_decomposition, build_decomposition_with, compute_outer, reconstruct, KstDecomposition,
    KstOptions, KstWeights, OuterFunction,
};
pub use network::{
    build_network, modulus_delta, propagation_reach, sup_error, BuildOptions, BuildReport,
    TlfnModel, TlfnRecord,
};
pub use poly_fit::{
    fit_polynomial, represent_univariate, sigma_rep, FitOptions, RationalizedFit, SigmaTerm,
    SigmaTermRecord, VerificationGrid,
};
pub use rug::{Float, Integer, Rational};
