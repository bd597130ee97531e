//! CVRP instances: the depot, customer coordinates, integer demands and the
//! vehicle capacity. The bound on depot returns is always derived from the
//! demands, never stored.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{HlgpError, Result};

pub type Point = [f64; 2];

/// Largest demand drawn by [`generate`].
pub const MAX_GENERATED_DEMAND: u32 = 9;

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// `ceil(sum / capacity) + 1`, the maximum number of depot returns.
pub fn compute_nmax(demands: &[u32], capacity: u32) -> Result<usize> {
    if demands.is_empty() {
        return Err(HlgpError::InvalidInstance("no demands".into()));
    }
    if capacity == 0 {
        return Err(HlgpError::InvalidInstance("capacity must be positive".into()));
    }
    let max_demand = *demands.iter().max().unwrap();
    if capacity < max_demand {
        return Err(HlgpError::CapacityBelowDemand {
            capacity,
            max_demand,
        });
    }
    let total: u64 = demands.iter().map(|&d| d as u64).sum();
    Ok(total.div_ceil(capacity as u64) as usize + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "InstanceRecord", try_from = "InstanceRecord")]
pub struct Instance {
    depot: Point,
    customers: Vec<Point>,
    demands: Vec<u32>,
    capacity: u32,
    n_max: usize,
}

impl Instance {
    pub fn new(depot: Point, customers: Vec<Point>, demands: Vec<u32>, capacity: u32) -> Result<Self> {
        if customers.len() != demands.len() {
            return Err(HlgpError::InvalidInstance(format!(
                "{} customers but {} demands",
                customers.len(),
                demands.len()
            )));
        }
        if let Some(i) = demands.iter().position(|&d| d == 0) {
            return Err(HlgpError::InvalidInstance(format!("demand of customer {i} is zero")));
        }
        let coords_finite = depot.iter().chain(customers.iter().flatten()).all(|v| v.is_finite());
        if !coords_finite {
            return Err(HlgpError::InvalidInstance("non-finite coordinate".into()));
        }
        let n_max = compute_nmax(&demands, capacity)?;
        Ok(Instance {
            depot,
            customers,
            demands,
            capacity,
            n_max,
        })
    }

    pub fn depot(&self) -> Point {
        self.depot
    }

    pub fn customers(&self) -> &[Point] {
        &self.customers
    }

    pub fn coord(&self, customer: usize) -> Point {
        self.customers[customer]
    }

    pub fn demands(&self) -> &[u32] {
        &self.demands
    }

    pub fn demand(&self, customer: usize) -> u32 {
        self.demands[customer]
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.customers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customers.is_empty()
    }

    pub fn total_demand(&self) -> u64 {
        self.demands.iter().map(|&d| d as u64).sum()
    }

    pub fn demand_of(&self, nodes: &[usize]) -> u32 {
        nodes.iter().map(|&i| self.demands[i]).sum()
    }

    /// Distance between two customers.
    #[inline]
    pub fn dist(&self, a: usize, b: usize) -> f64 {
        dist(self.customers[a], self.customers[b])
    }

    #[inline]
    pub fn depot_dist(&self, a: usize) -> f64 {
        dist(self.depot, self.customers[a])
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        if index < self.len() {
            Ok(())
        } else {
            Err(HlgpError::IndexOutOfRange { index, n: self.len() })
        }
    }

    /// Polar angle of a customer around the depot, in `[0, 2π)`.
    pub fn polar_angle(&self, customer: usize) -> f64 {
        polar_angle(self.depot, self.customers[customer])
    }
}

/// Angle of `p` around `origin` in `[0, 2π)`; zero when the points coincide.
pub fn polar_angle(origin: Point, p: Point) -> f64 {
    let a = (p[1] - origin[1]).atan2(p[0] - origin[0]);
    if a < 0.0 {
        a + std::f64::consts::TAU
    } else {
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionKind {
    Uniform,
    Gaussian,
    Explosion,
    Rotation,
}

impl DistributionKind {
    pub const ALL: [DistributionKind; 4] = [
        DistributionKind::Uniform,
        DistributionKind::Gaussian,
        DistributionKind::Explosion,
        DistributionKind::Rotation,
    ];
}

impl std::str::FromStr for DistributionKind {
    type Err = HlgpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(DistributionKind::Uniform),
            "gaussian" => Ok(DistributionKind::Gaussian),
            "explosion" => Ok(DistributionKind::Explosion),
            "rotation" => Ok(DistributionKind::Rotation),
            other => Err(HlgpError::InvalidSpec(format!("unknown distribution `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub kind: DistributionKind,
    pub seed: u64,
    pub n: usize,
    pub capacity: u32,
}

impl DistributionSpec {
    pub fn new(kind: DistributionKind, seed: u64, n: usize, capacity: u32) -> Self {
        DistributionSpec { kind, seed, n, capacity }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        DistributionSpec { seed, ..self }
    }
}

const GAUSSIAN_STD: f64 = 0.07;
const EXPLOSION_RADIUS: f64 = 0.3;

/// Draws an instance; a pure function of `spec`.
pub fn generate(spec: &DistributionSpec) -> Result<Instance> {
    if spec.n == 0 {
        return Err(HlgpError::InvalidSpec("n must be at least 1".into()));
    }
    if spec.capacity < MAX_GENERATED_DEMAND {
        return Err(HlgpError::InvalidSpec(format!(
            "capacity {} is below the maximum generated demand {MAX_GENERATED_DEMAND}",
            spec.capacity
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let depot = [rng.random::<f64>(), rng.random::<f64>()];
    let mut customers: Vec<Point> = (0..spec.n).map(|_| [rng.random(), rng.random()]).collect();

    match spec.kind {
        DistributionKind::Uniform => {}
        DistributionKind::Gaussian => {
            let clusters = spec.n.div_ceil(100);
            let centers: Vec<Point> = (0..clusters)
                .map(|_| [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)])
                .collect();
            let noise = Normal::new(0.0, GAUSSIAN_STD).unwrap();
            for p in customers.iter_mut() {
                let c = centers[rng.random_range(0..clusters)];
                *p = [c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)];
            }
        }
        DistributionKind::Explosion => {
            let center = [rng.random::<f64>(), rng.random::<f64>()];
            for p in customers.iter_mut() {
                let r = dist(center, *p);
                if r < EXPLOSION_RADIUS {
                    let angle = if r > 0.0 {
                        polar_angle(center, *p)
                    } else {
                        rng.random_range(0.0..std::f64::consts::TAU)
                    };
                    *p = [
                        center[0] + EXPLOSION_RADIUS * angle.cos(),
                        center[1] + EXPLOSION_RADIUS * angle.sin(),
                    ];
                }
            }
        }
        DistributionKind::Rotation => {
            // theta + a*sin(theta - phase) is strictly increasing for |a| < 1.
            let amplitude = rng.random_range(0.3..0.9);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let center = [0.5, 0.5];
            for p in customers.iter_mut() {
                let r = dist(center, *p);
                let theta = polar_angle(center, *p);
                let warped = theta + amplitude * (theta - phase).sin();
                *p = [center[0] + r * warped.cos(), center[1] + r * warped.sin()];
            }
        }
    }
    for p in customers.iter_mut() {
        p[0] = p[0].clamp(0.0, 1.0);
        p[1] = p[1].clamp(0.0, 1.0);
    }
    let demands = (0..spec.n)
        .map(|_| rng.random_range(1..=MAX_GENERATED_DEMAND))
        .collect();
    Instance::new(depot, customers, demands, spec.capacity)
}

/// Generates `count` instances with consecutive seeds starting at `spec.seed`.
pub fn generate_batch(spec: &DistributionSpec, count: usize) -> Result<Vec<Instance>> {
    (0..count as u64)
        .map(|i| generate(&spec.with_seed(spec.seed.wrapping_add(i))))
        .collect()
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRecord {
    depot: Point,
    customers: Vec<Point>,
    demands: Vec<u32>,
    capacity: u32,
}

impl From<&Instance> for InstanceRecord {
    fn from(inst: &Instance) -> Self {
        InstanceRecord {
            depot: inst.depot,
            customers: inst.customers.clone(),
            demands: inst.demands.clone(),
            capacity: inst.capacity,
        }
    }
}

impl From<Instance> for InstanceRecord {
    fn from(inst: Instance) -> Self {
        InstanceRecord::from(&inst)
    }
}

impl TryFrom<InstanceRecord> for Instance {
    type Error = HlgpError;

    fn try_from(record: InstanceRecord) -> Result<Self> {
        record.into_instance()
    }
}

impl InstanceRecord {
    fn into_instance(self) -> Result<Instance> {
        Instance::new(self.depot, self.customers, self.demands, self.capacity)
    }
}

impl Instance {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&InstanceRecord::from(self)).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Instance> {
        let record: InstanceRecord =
            serde_json::from_str(text).map_err(|e| HlgpError::parse("<string>", e))?;
        record.into_instance()
    }
}

pub fn save_instance(inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, inst.to_json()).map_err(|e| HlgpError::io(path, e))
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| HlgpError::io(path, e))?;
    let record: InstanceRecord = serde_json::from_str(&text).map_err(|e| HlgpError::parse(path, e))?;
    record.into_instance()
}

/// Writes one instance object per line.
pub fn save_dataset(instances: &[Instance], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| HlgpError::io(path, e))?;
    for inst in instances {
        writeln!(file, "{}", inst.to_json()).map_err(|e| HlgpError::io(path, e))?;
    }
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| HlgpError::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HlgpError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: InstanceRecord = serde_json::from_str(&line)
            .map_err(|e| HlgpError::parse(path, format!("line {}: {e}", lineno + 1)))?;
        out.push(record.into_instance()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nmax_formula() {
        assert_eq!(compute_nmax(&[200; 5], 200).unwrap(), 6);
        assert_eq!(compute_nmax(&[1, 1], 2).unwrap(), 2);
        assert_eq!(compute_nmax(&[9; 100], 200).unwrap(), 6);
    }

    #[test]
    fn nmax_rejects_small_capacity() {
        assert!(matches!(
            compute_nmax(&[3, 7], 5),
            Err(HlgpError::CapacityBelowDemand { capacity: 5, max_demand: 7 })
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = DistributionSpec::new(DistributionKind::Uniform, 1, 5, 10);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_training_setting() {
        let inst = generate(&DistributionSpec::new(DistributionKind::Uniform, 1, 1000, 200)).unwrap();
        assert_eq!(inst.len(), 1000);
        let expected = (inst.total_demand() as f64 / 200.0).ceil() as usize + 1;
        assert_eq!(inst.n_max(), expected);
        for p in inst.customers().iter().chain(std::iter::once(&inst.depot())) {
            assert!((0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]));
        }
    }

    #[test]
    fn gaussian_demands_in_range() {
        let inst = generate(&DistributionSpec::new(DistributionKind::Gaussian, 7, 100, 300)).unwrap();
        assert!(inst.demands().iter().all(|d| (1..=9).contains(d)));
    }

    #[test]
    fn every_kind_stays_in_unit_square() {
        for kind in DistributionKind::ALL {
            for seed in 0..20 {
                let inst = generate(&DistributionSpec::new(kind, seed, 150, 50)).unwrap();
                for p in inst.customers() {
                    assert!((0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]), "{kind:?}");
                }
            }
        }
    }

    #[test]
    fn explosion_clears_the_blast_disc() {
        let inst = generate(&DistributionSpec::new(DistributionKind::Explosion, 3, 400, 50)).unwrap();
        // Regenerate the epicenter from the same stream.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let _depot: (f64, f64) = (rng.random(), rng.random());
        for _ in 0..400 {
            let _: (f64, f64) = (rng.random(), rng.random());
        }
        let center = [rng.random::<f64>(), rng.random::<f64>()];
        for &p in inst.customers() {
            let inside_square = p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0;
            if inside_square {
                assert!(dist(center, p) >= EXPLOSION_RADIUS - 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate(&DistributionSpec::new(DistributionKind::Uniform, 0, 0, 50)).is_err());
        assert!(generate(&DistributionSpec::new(DistributionKind::Uniform, 0, 5, 8)).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        let inst = generate(&DistributionSpec::new(DistributionKind::Rotation, 11, 40, 50)).unwrap();
        save_instance(&inst, &path).unwrap();
        assert_eq!(load_instance(&path).unwrap(), inst);
    }

    #[test]
    fn missing_capacity_names_the_field() {
        let err = Instance::from_json(r#"{"depot":[0,0],"customers":[[1,1]],"demands":[1]}"#).unwrap_err();
        assert!(matches!(err, HlgpError::Parse { .. }));
        assert!(err.to_string().contains("capacity"), "{err}");
    }

    #[test]
    fn demand_count_mismatch_is_rejected() {
        let err = Instance::from_json(
            r#"{"depot":[0,0],"customers":[[1,1],[0.5,0.5]],"demands":[1],"capacity":5}"#,
        )
        .unwrap_err();
        assert!(matches!(err, HlgpError::InvalidInstance(_)), "{err}");
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.jsonl");
        let spec = DistributionSpec::new(DistributionKind::Gaussian, 5, 30, 40);
        let set = generate_batch(&spec, 4).unwrap();
        save_dataset(&set, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), set);
    }
}
