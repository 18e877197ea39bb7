//! Shared fixture builders for the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfdet_core::anchors::{multi_anchor_lattice, AnchorLattice, AnchorSpec};
use sfdet_core::geom::OBox;
use sfdet_core::proposals::{DeltaMap, Proposal};
use sfdet_core::scoremap::ScoreMap;
use std::f64::consts::FRAC_PI_2;

pub fn random_boxes(seed: u64, n: usize) -> Vec<OBox> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            OBox::new(
                rng.gen_range(0.0..512.0),
                rng.gen_range(0.0..512.0),
                rng.gen_range(4.0..128.0),
                rng.gen_range(4.0..128.0),
                rng.gen_range(-FRAC_PI_2..FRAC_PI_2),
            )
        })
        .collect()
}

pub fn random_proposals(seed: u64, n: usize) -> Vec<Proposal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_boxes(seed ^ 0x5f5f, n)
        .into_iter()
        .map(|bbox| Proposal {
            bbox,
            score: rng.gen_range(0.0..1.0),
            source_anchor: (0, 0, 0),
        })
        .collect()
}

pub struct PipelineFixture {
    pub scores: ScoreMap,
    pub deltas: DeltaMap,
    pub lattice: AnchorLattice,
}

pub fn pipeline_fixture(seed: u64, side: usize) -> PipelineFixture {
    let spec = AnchorSpec::dota_adjusted();
    let lattice = multi_anchor_lattice(&spec, 8.0, side, side);
    let apl = lattice.anchors_per_location();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = ScoreMap::from_values(
        side,
        side,
        apl,
        (0..side * side * apl)
            .map(|_| rng.gen_range(-4.0..4.0))
            .collect(),
    )
    .unwrap();
    let deltas = DeltaMap::from_values(
        side,
        side,
        apl,
        (0..side * side * apl * 5)
            .map(|_| rng.gen_range(-0.3..0.3))
            .collect(),
    )
    .unwrap();
    PipelineFixture {
        scores,
        deltas,
        lattice,
    }
}
