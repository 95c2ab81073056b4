//! Bayesian nonparametric estimation of monotone non-increasing Poisson
//! intensities with Dirichlet-process mixtures of uniform kernels.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod base_measure;
pub mod calibration;
pub mod error;
pub mod gaussian;
pub mod geweke;
pub mod gibbs;
pub mod grid;
pub mod harness;
pub mod intensity;
pub mod mixture;
pub mod point_process;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod stats;

pub use base_measure::{psi_transform, BaseFamily, BaseMeasure};
pub use error::{Error, Result};
pub use gibbs::{run_chain, ArProposal, ChainConfig, ChainTrace, Sampler, SamplerSettings, TraceRow};
pub use grid::{Grid, GridFunction};
pub use intensity::{FnIntensity, Intensity, NormalizedIntensity, TruthId, TruthIntensity};
pub use mixture::{sample_prior, HyperPriors, HyperState, MixtureState, Strategy};
pub use point_process::{simulate, simulate_truth, PointProcessSample};
pub use calibration::{gamma_fixed, gamma_hat, psi, psi_inverse, GammaHat, PsiTable};
pub use harness::{
    distance, run_study, summarize, Bands, Distance, ExperimentConfig, StrategyKind, StudyStrategy, SummaryRecord,
};
