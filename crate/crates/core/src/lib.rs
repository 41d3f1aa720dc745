//! Integrated Gradients with saturation analysis.
//!
//! The crate computes Integrated Gradients (IG) along a straight path from a
//! baseline to an input, splits the path at the point where the target
//! output has covered a fraction ψ of its total change, and attributes the
//! two halves separately (left: unsaturated, right: saturated). It ships the
//! evaluation instruments used to compare the halves (norm ratios, cosine
//! similarity, area between perturbation curves, sensitivity), a small
//! reverse-mode differentiation kernel, and desk-scale models to run on.

pub mod autodiff;
pub mod error;
pub mod metrics;
pub mod path;
pub mod softmax_lens;
pub mod tensor;
pub mod zoo;

pub use autodiff::{gradcheck, ComputeGraph, DifferentiableModel, GraphBuilder, LogitNetwork};
pub use error::{Error, Result};
pub use metrics::{
    abpc, aggregate, cosine_similarity, evaluate_sample, norm_ratio, sensitivity, MetricsReport, Norm,
    SampleProtocol, SensitivityConfig,
};
pub use path::{
    find_alpha_star, integrated_gradients, path_scan, split_integrated_gradients, AlphaStar,
    AttributionResult, PathProfile, PathSpec, QuadratureRule, Segment, SplitAttribution,
};
pub use softmax_lens::{damping_scan, decompose_softmax_gradient, DampingProfile, SoftmaxDecomposition};
pub use tensor::FeatureVector;
pub use zoo::{gen_synthetic, load_model, make_analytic, save_model, train_mlp, Dataset, ModelKind, ModelSpec};
