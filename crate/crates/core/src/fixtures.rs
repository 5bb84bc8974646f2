//! Bundled datasets.

/// Observed outcomes of the simulated `2^2` experiment with 20 units
/// (`unit_id,A,B,y_obs`).
pub const TABLE2_CSV: &str = include_str!("../fixtures/table2.csv");

/// Configuration of the binary spring study.
pub const TABLE5_CONFIG: &str = include_str!("../fixtures/table5.conf");

/// Success probabilities of the binary spring study, Yates order.
pub const TABLE5_PROBABILITIES: [f64; 8] = [0.67, 0.79, 0.61, 0.75, 0.59, 0.90, 0.52, 0.87];

/// Mean vector of the Gaussian model that generated [`TABLE2_CSV`].
pub const TABLE2_TRUE_MEANS: [f64; 4] = [10.0, 12.0, 13.0, 15.0];
