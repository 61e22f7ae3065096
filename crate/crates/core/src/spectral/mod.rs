//! Spectral exponents, empirical counting slopes, and the bracketing and
//! cut-set checks that tie the tree geometry to the counting function.

pub mod bracketing;
pub mod cutstats;
pub mod empirical;
pub mod exponent;

pub use bracketing::{bracketing_check, BracketingPoint, BracketingResult, PointStatus};
pub use cutstats::{cutset_stats_check, CutStatsRow};
pub use empirical::{counting_slope, default_window, empirical_exponent, geometric_grid};
pub use exponent::{
    f_exact_homogeneous, f_monte_carlo, f_recursive, solve_gamma, solve_gamma_homogeneous, solve_gamma_recursive,
    EmpiricalFit, ExponentReport, FEvaluator, FValue, HomogeneousF, Method, MonteCarloF, RecursiveF, SolveOptions,
};
