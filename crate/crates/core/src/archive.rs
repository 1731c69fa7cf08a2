//! Illumination (MAP-Elites style) archive: an n-dimensional grid of bins,
//! each holding at most one elite. One archive per search process; three
//! levels of them make up the full system.
//!
//! Bins are keyed by integer index vectors and stored in a `BTreeMap`, so
//! every iteration order is the lexicographic order of index vectors. That
//! ordering is part of the contract: selection, snapshots, and metrics must
//! be reproducible bit-for-bit across runs and platforms.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One feature dimension: bounds and bin count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimSpec {
    pub lower: f64,
    pub upper: f64,
    pub bins: usize,
}

/// Discretisation of a feature space into a grid of bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    dims: Vec<DimSpec>,
}

impl FeatureSpec {
    pub fn new(dims: Vec<DimSpec>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Config("feature spec needs at least one dimension".into()));
        }
        for (d, dim) in dims.iter().enumerate() {
            if !(dim.lower < dim.upper) {
                return Err(Error::Config(format!(
                    "feature dim {d}: lower bound {} must be below upper bound {}",
                    dim.lower, dim.upper
                )));
            }
            if dim.bins == 0 {
                return Err(Error::Config(format!("feature dim {d}: bin count must be >= 1")));
            }
        }
        Ok(Self { dims })
    }

    /// Convenience constructor for the common 2D grid.
    pub fn grid2(d0: (f64, f64, usize), d1: (f64, f64, usize)) -> Result<Self> {
        Self::new(vec![
            DimSpec { lower: d0.0, upper: d0.1, bins: d0.2 },
            DimSpec { lower: d1.0, upper: d1.1, bins: d1.2 },
        ])
    }

    pub fn dims(&self) -> &[DimSpec] {
        &self.dims
    }

    pub fn dim_count(&self) -> usize {
        self.dims.len()
    }

    pub fn total_bins(&self) -> usize {
        self.dims.iter().map(|d| d.bins).product()
    }

    /// Lower bound of bin `i` along dimension `d`.
    pub fn bin_lower(&self, d: usize, i: usize) -> f64 {
        let dim = &self.dims[d];
        dim.lower + (dim.upper - dim.lower) * i as f64 / dim.bins as f64
    }

    /// Clamp a feature vector into the spec's bounds.
    pub fn clamp(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_len(features)?;
        Ok(features
            .iter()
            .zip(&self.dims)
            .map(|(&f, d)| f.clamp(d.lower, d.upper))
            .collect())
    }

    /// Map a feature vector to its bin index vector.
    ///
    /// Per dimension: `floor((clamp(f) - lower) / (upper - lower) * bins)`,
    /// with the upper bound itself mapping into the last bin.
    pub fn bin_index(&self, features: &[f64]) -> Result<Vec<usize>> {
        self.check_len(features)?;
        Ok(features
            .iter()
            .zip(&self.dims)
            .map(|(&f, d)| {
                let clamped = f.clamp(d.lower, d.upper);
                let frac = (clamped - d.lower) / (d.upper - d.lower);
                ((frac * d.bins as f64).floor() as usize).min(d.bins - 1)
            })
            .collect())
    }

    /// True if `index` is a valid bin index vector under this spec.
    pub fn contains_index(&self, index: &[usize]) -> bool {
        index.len() == self.dims.len() && index.iter().zip(&self.dims).all(|(&i, d)| i < d.bins)
    }

    fn check_len(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.dims.len() {
            return Err(Error::Dimension { expected: self.dims.len(), actual: features.len() });
        }
        Ok(())
    }
}

/// Which of the three stacked levels an archive belongs to.
///
/// The derived `Ord` (material < component < robot) fixes the processing
/// order of cascades: lower levels settle before their dependents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Material,
    Component,
    Robot,
}

impl Level {
    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Material => "material",
            Level::Component => "component",
            Level::Robot => "robot",
        }
    }
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "material" => Ok(Level::Material),
            "component" => Ok(Level::Component),
            "robot" => Ok(Level::Robot),
            other => Err(Error::Config(format!("unknown level {other:?}"))),
        }
    }
}

/// Coordinate of one bin in one archive, usable across levels. Orders by
/// level, then process, then index, which is also cascade processing order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BinRef {
    pub level: Level,
    pub process: String,
    pub index: Vec<usize>,
}

impl BinRef {
    pub fn new(level: Level, process: impl Into<String>, index: Vec<usize>) -> Self {
        Self { level, process: process.into(), index }
    }
}

impl std::fmt::Display for BinRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{:?}", self.level.as_str(), self.process, self.index)
    }
}

/// Whether a fitness value came from the fine ("real") or coarse ("virtual")
/// evaluator. Real and virtual solutions share one genome representation and
/// compete inside the same archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Virtual,
    Real,
}

/// The best known solution for one bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elite {
    /// Canonical JSON of the level-specific genome. Opaque to the archive.
    pub genome: serde_json::Value,
    pub fitness: f64,
    pub features: Vec<f64>,
    pub provenance: Provenance,
    pub stale: bool,
    pub eval_id: u64,
}

/// Result of offering a candidate to an archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    /// The bin was empty; the candidate now occupies it.
    NewBin,
    /// The candidate beat the incumbent and replaced it.
    Improved,
    /// The incumbent stays (ties keep the incumbent).
    Rejected,
}

impl InsertOutcome {
    pub fn accepted(&self) -> bool {
        !matches!(self, InsertOutcome::Rejected)
    }
}

/// Archive-quality metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMetrics {
    /// Occupied bins / total bins.
    pub coverage: f64,
    /// Sum of occupant fitnesses shifted by the minimum occupant fitness,
    /// so every summand is non-negative.
    pub qd_score: f64,
    /// Best occupant fitness; `None` for an empty archive.
    pub best_fitness: Option<f64>,
    pub occupied: usize,
    pub total_bins: usize,
}

/// One search process's library: a grid of bins over its feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    spec: FeatureSpec,
    level: Level,
    process: String,
    bins: BTreeMap<Vec<usize>, Elite>,
}

impl Archive {
    pub fn new(spec: FeatureSpec, level: Level, process: impl Into<String>) -> Self {
        Self { spec, level, process: process.into(), bins: BTreeMap::new() }
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn process(&self) -> &str {
        &self.process
    }

    pub fn occupied(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Occupied bins in lexicographic index order.
    pub fn iter(&self) -> impl Iterator<Item = (&Vec<usize>, &Elite)> {
        self.bins.iter()
    }

    pub fn get(&self, index: &[usize]) -> Option<&Elite> {
        self.bins.get(index)
    }

    /// Bin index a candidate with these features would land in.
    pub fn bin_of(&self, features: &[f64]) -> Result<Vec<usize>> {
        self.spec.bin_index(features)
    }

    /// Offer a candidate. Features are clamped into bounds before binning;
    /// the stored elite carries the clamped features. Non-finite fitness or
    /// features are an evaluation error and leave the archive unchanged.
    pub fn try_insert(&mut self, mut candidate: Elite) -> Result<InsertOutcome> {
        if !candidate.fitness.is_finite() {
            return Err(Error::NonFinite { what: "fitness" });
        }
        if candidate.features.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite { what: "features" });
        }
        candidate.features = self.spec.clamp(&candidate.features)?;
        let index = self.spec.bin_index(&candidate.features)?;
        match self.bins.get(&index) {
            None => {
                self.bins.insert(index, candidate);
                Ok(InsertOutcome::NewBin)
            }
            Some(incumbent) if candidate.fitness > incumbent.fitness => {
                self.bins.insert(index, candidate);
                Ok(InsertOutcome::Improved)
            }
            Some(_) => Ok(InsertOutcome::Rejected),
        }
    }

    /// Pick an occupied bin uniformly at random. The selection order is the
    /// lexicographic order of index vectors, so a given rng state always
    /// picks the same elite.
    pub fn select_random_occupied<R: Rng>(&self, rng: &mut R) -> Result<(&Vec<usize>, &Elite)> {
        if self.bins.is_empty() {
            return Err(Error::EmptyArchive { archive: self.tag() });
        }
        let nth = rng.random_range(0..self.bins.len());
        Ok(self.nth_occupied(nth).expect("nth < len"))
    }

    /// The n-th occupied bin in lexicographic index order.
    pub fn nth_occupied(&self, n: usize) -> Option<(&Vec<usize>, &Elite)> {
        self.bins.iter().nth(n)
    }

    pub fn metrics(&self) -> ArchiveMetrics {
        let total = self.spec.total_bins();
        let occupied = self.bins.len();
        let mut best: Option<f64> = None;
        let mut min: Option<f64> = None;
        let mut sum = 0.0;
        for elite in self.bins.values() {
            sum += elite.fitness;
            best = Some(best.map_or(elite.fitness, |b| b.max(elite.fitness)));
            min = Some(min.map_or(elite.fitness, |m| m.min(elite.fitness)));
        }
        let qd_score = match min {
            Some(m) => sum - m * occupied as f64,
            None => 0.0,
        };
        ArchiveMetrics {
            coverage: occupied as f64 / total as f64,
            qd_score,
            best_fitness: best,
            occupied,
            total_bins: total,
        }
    }

    /// `level:process` tag used in errors and logs.
    pub fn tag(&self) -> String {
        format!("{}:{}", self.level.as_str(), self.process)
    }

    /// Mark the occupant of `index` stale. No-op on an empty bin.
    pub fn mark_stale(&mut self, index: &[usize]) {
        if let Some(elite) = self.bins.get_mut(index) {
            elite.stale = true;
        }
    }

    /// Replace the occupant of `index` in place. Cascade resweeps use this to
    /// refresh fitness at an unchanged bin; it is the one sanctioned way a
    /// bin's fitness may move down.
    pub fn replace_at(&mut self, index: Vec<usize>, elite: Elite) {
        debug_assert!(self.spec.contains_index(&index));
        self.bins.insert(index, elite);
    }

    /// Vacate a bin. Only the orchestrator's cascade re-binning may remove
    /// elites; the illumination loop itself never does.
    pub fn remove(&mut self, index: &[usize]) -> Option<Elite> {
        self.bins.remove(index)
    }
}

/// Canonical snapshot form of an archive, the serialization schema for both
/// on-disk snapshots and embedded state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveSnapshot {
    pub level: Level,
    pub process: String,
    pub spec: SnapshotSpec,
    pub bins: Vec<SnapshotBin>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotSpec {
    pub bounds: Vec<[f64; 2]>,
    pub bins_per_dim: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotBin {
    pub index: Vec<usize>,
    pub fitness: f64,
    pub features: Vec<f64>,
    pub provenance: Provenance,
    pub stale: bool,
    pub eval_id: u64,
    pub genome: serde_json::Value,
}

impl Archive {
    /// Snapshot with bins in lexicographic index order (the canonical form
    /// byte-level determinism tests compare).
    pub fn snapshot(&self) -> ArchiveSnapshot {
        ArchiveSnapshot {
            level: self.level,
            process: self.process.clone(),
            spec: SnapshotSpec {
                bounds: self.spec.dims.iter().map(|d| [d.lower, d.upper]).collect(),
                bins_per_dim: self.spec.dims.iter().map(|d| d.bins).collect(),
            },
            bins: self
                .bins
                .iter()
                .map(|(index, e)| SnapshotBin {
                    index: index.clone(),
                    fitness: e.fitness,
                    features: e.features.clone(),
                    provenance: e.provenance,
                    stale: e.stale,
                    eval_id: e.eval_id,
                    genome: e.genome.clone(),
                })
                .collect(),
        }
    }

    pub fn from_snapshot(snap: ArchiveSnapshot) -> Result<Self> {
        let dims = snap
            .spec
            .bounds
            .iter()
            .zip(&snap.spec.bins_per_dim)
            .map(|(b, &n)| DimSpec { lower: b[0], upper: b[1], bins: n })
            .collect();
        let spec = FeatureSpec::new(dims)?;
        let mut bins = BTreeMap::new();
        for bin in snap.bins {
            if !spec.contains_index(&bin.index) {
                return Err(Error::Load {
                    path: format!("{}:{}", snap.level.as_str(), snap.process),
                    reason: format!("bin index {:?} outside spec", bin.index),
                });
            }
            bins.insert(
                bin.index,
                Elite {
                    genome: bin.genome,
                    fitness: bin.fitness,
                    features: bin.features,
                    provenance: bin.provenance,
                    stale: bin.stale,
                    eval_id: bin.eval_id,
                },
            );
        }
        Ok(Self { spec, level: snap.level, process: snap.process, bins })
    }
}

impl Serialize for Archive {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.snapshot().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Archive {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let snap = ArchiveSnapshot::deserialize(deserializer)?;
        Archive::from_snapshot(snap).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_spec(bins: usize) -> FeatureSpec {
        FeatureSpec::grid2((0.0, 1.0, bins), (0.0, 1.0, bins)).unwrap()
    }

    fn elite(fitness: f64, features: &[f64]) -> Elite {
        Elite {
            genome: serde_json::json!({"g": features}),
            fitness,
            features: features.to_vec(),
            provenance: Provenance::Virtual,
            stale: false,
            eval_id: 0,
        }
    }

    #[test]
    fn bin_index_boundaries() {
        let spec = FeatureSpec::new(vec![DimSpec { lower: 0.0, upper: 1.0, bins: 10 }]).unwrap();
        assert_eq!(spec.bin_index(&[0.0]).unwrap(), vec![0]);
        assert_eq!(spec.bin_index(&[1.0]).unwrap(), vec![9]);
        assert_eq!(spec.bin_index(&[0.55]).unwrap(), vec![5]);
    }

    #[test]
    fn bin_index_clamps_out_of_range() {
        let spec = FeatureSpec::new(vec![DimSpec { lower: 0.0, upper: 1.0, bins: 10 }]).unwrap();
        assert_eq!(spec.bin_index(&[-3.0]).unwrap(), vec![0]);
        assert_eq!(spec.bin_index(&[17.0]).unwrap(), vec![9]);
    }

    #[test]
    fn bin_index_length_mismatch() {
        let spec = unit_spec(10);
        assert!(matches!(spec.bin_index(&[0.5]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn bin_index_surjective_over_sweep() {
        let spec = unit_spec(7);
        let mut seen = std::collections::BTreeSet::new();
        let steps = 200;
        for i in 0..=steps {
            for j in 0..=steps {
                let f = [i as f64 / steps as f64, j as f64 / steps as f64];
                seen.insert(spec.bin_index(&f).unwrap());
            }
        }
        assert_eq!(seen.len(), spec.total_bins());
    }

    #[test]
    fn insert_new_improved_rejected() {
        let mut archive = Archive::new(unit_spec(10), Level::Material, "0");
        assert_eq!(archive.try_insert(elite(1.0, &[0.5, 0.5])).unwrap(), InsertOutcome::NewBin);
        assert_eq!(archive.try_insert(elite(2.0, &[0.5, 0.5])).unwrap(), InsertOutcome::Improved);
        // Ties keep the incumbent.
        assert_eq!(archive.try_insert(elite(2.0, &[0.5, 0.5])).unwrap(), InsertOutcome::Rejected);
        assert_eq!(archive.try_insert(elite(1.5, &[0.5, 0.5])).unwrap(), InsertOutcome::Rejected);
        assert_eq!(archive.occupied(), 1);
        assert_eq!(archive.get(&[5, 5]).unwrap().fitness, 2.0);
    }

    #[test]
    fn insert_rejects_non_finite() {
        let mut archive = Archive::new(unit_spec(10), Level::Material, "0");
        assert!(archive.try_insert(elite(f64::NAN, &[0.5, 0.5])).is_err());
        assert!(archive.try_insert(elite(f64::INFINITY, &[0.5, 0.5])).is_err());
        assert!(archive.try_insert(elite(1.0, &[f64::NAN, 0.5])).is_err());
        assert_eq!(archive.occupied(), 0);
    }

    #[test]
    fn select_single_occupied() {
        let mut archive = Archive::new(unit_spec(10), Level::Material, "0");
        archive.try_insert(elite(1.0, &[0.1, 0.1])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let (_, e) = archive.select_random_occupied(&mut rng).unwrap();
            assert_eq!(e.fitness, 1.0);
        }
    }

    #[test]
    fn select_empty_errors() {
        let archive = Archive::new(unit_spec(10), Level::Material, "0");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(matches!(
            archive.select_random_occupied(&mut rng),
            Err(Error::EmptyArchive { .. })
        ));
    }

    #[test]
    fn select_is_roughly_uniform() {
        let mut archive = Archive::new(unit_spec(10), Level::Material, "0");
        archive.try_insert(elite(1.0, &[0.1, 0.1])).unwrap();
        archive.try_insert(elite(2.0, &[0.9, 0.9])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut first = 0u32;
        for _ in 0..10_000 {
            let (_, e) = archive.select_random_occupied(&mut rng).unwrap();
            if e.fitness == 1.0 {
                first += 1;
            }
        }
        assert!((4700..=5300).contains(&first), "first selected {first} times");
    }

    #[test]
    fn select_is_deterministic() {
        let mut archive = Archive::new(unit_spec(10), Level::Material, "0");
        for i in 0..20 {
            let f = i as f64 / 19.0;
            archive.try_insert(elite(f, &[f, 1.0 - f])).unwrap();
        }
        let picks = |seed: u64| -> Vec<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| archive.select_random_occupied(&mut rng).unwrap().1.fitness)
                .collect()
        };
        assert_eq!(picks(3), picks(3));
        assert_ne!(picks(3), picks(4));
    }

    #[test]
    fn metrics_on_empty_and_partial() {
        let mut archive = Archive::new(unit_spec(10), Level::Material, "0");
        let m = archive.metrics();
        assert_eq!(m.coverage, 0.0);
        assert_eq!(m.qd_score, 0.0);
        assert_eq!(m.best_fitness, None);

        archive.try_insert(elite(1.0, &[0.05, 0.05])).unwrap();
        archive.try_insert(elite(2.0, &[0.55, 0.55])).unwrap();
        archive.try_insert(elite(3.0, &[0.95, 0.95])).unwrap();
        let m = archive.metrics();
        assert!((m.coverage - 0.03).abs() < 1e-12);
        assert!((m.qd_score - 3.0).abs() < 1e-12);
        assert_eq!(m.best_fitness, Some(3.0));
    }

    #[test]
    fn metrics_full_coverage() {
        let mut archive = Archive::new(unit_spec(10), Level::Material, "0");
        for i in 0..10 {
            for j in 0..10 {
                let f = [(i as f64 + 0.5) / 10.0, (j as f64 + 0.5) / 10.0];
                archive.try_insert(elite(-((i + j) as f64), &f)).unwrap();
            }
        }
        assert_eq!(archive.metrics().coverage, 1.0);
    }

    #[test]
    fn snapshot_round_trip_is_byte_identical() {
        let mut archive = Archive::new(unit_spec(10), Level::Component, "sensor");
        archive.try_insert(elite(1.0, &[0.3, 0.8])).unwrap();
        archive.try_insert(elite(-2.0, &[0.9, 0.1])).unwrap();
        let json = serde_json::to_string(&archive).unwrap();
        let back: Archive = serde_json::from_str(&json).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
        assert_eq!(back, archive);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Per-bin fitness never decreases and occupancy never shrinks
            /// under any insertion sequence.
            #[test]
            fn monotone_elitism(ops in proptest::collection::vec(
                (0.0f64..1.0, 0.0f64..1.0, -100.0f64..100.0), 1..200)
            ) {
                let mut archive = Archive::new(unit_spec(5), Level::Material, "0");
                let mut best: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
                let mut occupied = 0usize;
                for (x, y, fit) in ops {
                    let features = [x, y];
                    let index = archive.bin_of(&features).unwrap();
                    archive.try_insert(elite(fit, &features)).unwrap();
                    let stored = archive.get(&index).unwrap().fitness;
                    if let Some(prev) = best.get(&index) {
                        prop_assert!(stored >= *prev);
                    }
                    best.insert(index, stored);
                    prop_assert!(archive.occupied() >= occupied);
                    occupied = archive.occupied();
                }
            }
        }
    }
}
