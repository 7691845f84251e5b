//! Fixtures for the criterion benchmarks under `benches/`; run them with
//! `cargo bench -p mctm-bench`.

use mctm_core::basis::{expand, fit_bounds};
use mctm_core::dgp::{generate, DgpId, DgpSpec};
use mctm_core::{BasisExpansion, BoundPolicy};

/// Expansion of `n` draws from one simulated process at the default degree.
pub fn process_expansion(id: DgpId, n: usize, seed: u64) -> BasisExpansion {
    let data = generate(&DgpSpec::new(id, n, seed)).expect("valid process spec");
    let config =
        fit_bounds(&data, mctm_core::basis::DEFAULT_DEGREE, &BoundPolicy::default()).expect("non-constant columns");
    expand(&data, &config).expect("bounds match data")
}
