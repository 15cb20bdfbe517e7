//! Synthetic studies: a hybrid-tensor generator, a function-on-function
//! regression generator, the two simulation scenarios built from them and a
//! small rank-one fixture for the selection procedure.
//!
//! Every generator is a pure function of its config. Replicate `r` of cell `c`
//! draws from ChaCha stream `c * replicates + r` of the master seed, so
//! replicates never share random numbers and can run in any order.

mod fixture;
mod fof;
mod hybrid;
mod scenario;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use fixture::{rank_one_fixture, RankOneFixture, RankOneFixtureConfig};
pub use fof::{gen_fof, intercept_curve, CoefficientMode, FofGenConfig, FofTruth, SurfaceSpec};
pub use hybrid::{gen_hybrid, HybridGenConfig, HybridTruth, OmegaSparsity};
pub use scenario::{
    component_budget, run_scenario, run_scenario1, run_scenario2, ArmOutcome, CellKey, ReplicateRecord,
    ScenarioConfig, ScenarioReport, SummaryRow,
};

/// Orthonormal Fourier functions on `[0, 1]`: `1, sqrt2 sin(2 pi x), sqrt2 cos(2 pi x), ...`.
pub fn fourier(k: usize, x: f64) -> f64 {
    use std::f64::consts::{PI, SQRT_2};
    if k == 0 {
        return 1.0;
    }
    let freq = k.div_ceil(2) as f64;
    if k % 2 == 1 {
        SQRT_2 * (2.0 * PI * freq * x).sin()
    } else {
        SQRT_2 * (2.0 * PI * freq * x).cos()
    }
}

/// ChaCha8 generator for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
