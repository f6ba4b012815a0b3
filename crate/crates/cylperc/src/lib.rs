// cylperc — vacant-set percolation toolkit for Poisson ensembles of
// unit-radius cylinders in R^3.
//
// Module overview:
// - `geom`:    lines, cylinders, the hexagonal boundary distance field, the
//              periodic surface H and the flattening map F.
// - `lines`:   the invariant line measure, Poisson sampling of cylinders
//              hitting finite windows, hitting indicators and vacancy probes.
// - `surface`: rasterized cylinder traces on H (and on the plane z=0),
//              crossing events, dual circuits, cluster statistics.
// - `renorm`:  the super-exponential scale sequence, lattice coverings,
//              secant-index selection, p_n/q_n estimators and the exact
//              arithmetic for the recursion/induction/tail bounds.
// - `lemma`:   constructive verifiers for the deterministic two-cylinder
//              lemmas (core segment, tube, blocking) and the horizon scan.
// - `extreal`: thin extended-precision wrapper (the scale sequence leaves
//              f64 range after a handful of levels).
// - `harness`: config parsing, seeded replica fan-out, experiment recipes,
//              CSV/JSON output.
//
// Everything outside `harness` is a pure function of its inputs; all
// randomness flows through explicit 64-bit seeds.

pub mod extreal;
pub mod geom;
pub mod harness;
pub mod lemma;
pub mod lines;
pub mod renorm;
pub mod surface;

/// Absolute tolerance for geometric predicates.
pub const GEOM_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("window not covered by sample: {0}")]
    Coverage(String),
    #[error("no closed form for this window kind; use estimate_mu_hitting_both")]
    EstimateOnly,
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("value out of f64 range: {0}")]
    ScaleOverflow(String),
    #[error("unknown experiment: {0}")]
    UnknownExperiment(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// SplitMix64 step: the published per-replica seed derivation.
/// Replica k of master seed s uses `mix64(s ^ mix64(k))`.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replica `index` of a run with master seed `master`.
pub fn replica_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replica_seeds_distinct() {
        let s: Vec<u64> = (0..1000).map(|i| replica_seed(42, i)).collect();
        let mut sorted = s.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), s.len());
    }
}
