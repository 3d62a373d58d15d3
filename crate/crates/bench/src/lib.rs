//! Fixtures shared by the benchmarks.

use mnar_core::sampling::{observe_passive, passive_mask};
use mnar_core::transfer::gen_partition;
use mnar_core::{ObservationSet, SpectralFeatures, TransferPair};

/// The default partition instance with its exact features and a passive sample.
pub fn partition_fixture(p: f64, seed: u64) -> (TransferPair, SpectralFeatures, ObservationSet) {
    let pair = gen_partition(300, 200, 5, 0.1, 0.8, seed).expect("partition instance");
    let features = SpectralFeatures::exact(&pair.u, &pair.v).expect("orthonormal factors");
    let mask = passive_mask(300, 200, p, p, seed).expect("probabilities in range");
    let obs = observe_passive(&pair.q, &mask, 0.1, seed).expect("matching shapes");
    (pair, features, obs)
}
