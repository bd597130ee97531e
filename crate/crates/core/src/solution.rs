//! The two solution views: a partition of customers into subgraphs, and a
//! plan of depot-anchored tours.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HlgpError, Result};
use crate::instance::Instance;

/// Ordered list of disjoint, nonempty customer subgraphs. The order is
/// meaningful: it defines which subgraphs are neighbors.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PartitionSolution {
    pub subgraphs: Vec<Vec<usize>>,
}

impl PartitionSolution {
    pub fn new(subgraphs: Vec<Vec<usize>>) -> Self {
        PartitionSolution { subgraphs }
    }

    pub fn len(&self) -> usize {
        self.subgraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgraphs.is_empty()
    }

    pub fn num_customers(&self) -> usize {
        self.subgraphs.iter().map(Vec::len).sum()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }
}

/// Depot-anchored tours; each tour implicitly starts and ends at the depot.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoutePlan {
    pub tours: Vec<Vec<usize>>,
}

impl RoutePlan {
    pub fn new(tours: Vec<Vec<usize>>) -> Self {
        RoutePlan { tours }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value).expect("solution serializes");
    fs::write(path, text).map_err(|e| HlgpError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HlgpError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HlgpError::parse(path, e))
}

/// Length of depot -> tour[0] -> ... -> tour[last] -> depot. Empty tours cost 0.
pub fn tour_cost(tour: &[usize], inst: &Instance) -> Result<f64> {
    for &i in tour {
        inst.check_index(i)?;
    }
    Ok(tour_cost_unchecked(tour, inst))
}

pub(crate) fn tour_cost_unchecked(tour: &[usize], inst: &Instance) -> f64 {
    let (Some(&first), Some(&last)) = (tour.first(), tour.last()) else {
        return 0.0;
    };
    let inner: f64 = tour.windows(2).map(|w| inst.dist(w[0], w[1])).sum();
    inst.depot_dist(first) + inner + inst.depot_dist(last)
}

pub fn plan_cost(plan: &RoutePlan, inst: &Instance) -> Result<f64> {
    let report = validate_plan(plan, inst);
    if !report.is_feasible() {
        return Err(HlgpError::InvalidPlan(report.to_string()));
    }
    Ok(plan.tours.iter().map(|t| tour_cost_unchecked(t, inst)).sum())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    IndexOutOfRange { subgraph: usize, index: usize },
    Duplicate { customer: usize },
    Missing { customer: usize },
    EmptySubgraph { subgraph: usize },
    OverCapacity { subgraph: usize, demand: u32, capacity: u32 },
    TooManySubgraphs { count: usize, n_max: usize },
    NoSubgraphs,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::IndexOutOfRange { subgraph, index } => {
                write!(f, "subgraph {subgraph}: index {index} out of range")
            }
            Violation::Duplicate { customer } => write!(f, "customer {customer} appears more than once"),
            Violation::Missing { customer } => write!(f, "customer {customer} is not covered"),
            Violation::EmptySubgraph { subgraph } => write!(f, "subgraph {subgraph} is empty"),
            Violation::OverCapacity {
                subgraph,
                demand,
                capacity,
            } => write!(f, "subgraph {subgraph}: demand {demand} exceeds capacity {capacity}"),
            Violation::TooManySubgraphs { count, n_max } => {
                write!(f, "{count} subgraphs exceed the limit {n_max}")
            }
            Violation::NoSubgraphs => write!(f, "no subgraphs"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_disjointness_violation(&self) -> bool {
        self.violations.iter().any(|v| matches!(v, Violation::Duplicate { .. }))
    }

    pub fn has_coverage_violation(&self) -> bool {
        self.violations.iter().any(|v| matches!(v, Violation::Missing { .. }))
    }

    pub fn has_capacity_violation(&self) -> bool {
        self.violations.iter().any(|v| matches!(v, Violation::OverCapacity { .. }))
    }

    pub fn has_count_violation(&self) -> bool {
        self.violations
            .iter()
            .any(|v| matches!(v, Violation::TooManySubgraphs { .. } | Violation::NoSubgraphs))
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_feasible() {
            Ok(())
        } else {
            Err(HlgpError::InfeasiblePartition(self.to_string()))
        }
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "feasible");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

fn validate_groups(groups: &[Vec<usize>], inst: &Instance) -> ValidationReport {
    let n = inst.len();
    let mut violations = Vec::new();
    let mut seen = vec![false; n];
    let mut duplicates = BTreeSet::new();
    for (s, group) in groups.iter().enumerate() {
        if group.is_empty() {
            violations.push(Violation::EmptySubgraph { subgraph: s });
            continue;
        }
        let mut demand = 0u32;
        for &i in group {
            if i >= n {
                violations.push(Violation::IndexOutOfRange { subgraph: s, index: i });
                continue;
            }
            if seen[i] {
                duplicates.insert(i);
            }
            seen[i] = true;
            demand += inst.demand(i);
        }
        if demand > inst.capacity() {
            violations.push(Violation::OverCapacity {
                subgraph: s,
                demand,
                capacity: inst.capacity(),
            });
        }
    }
    violations.extend(duplicates.into_iter().map(|customer| Violation::Duplicate { customer }));
    violations.extend(
        seen.iter()
            .enumerate()
            .filter(|(_, &s)| !s)
            .map(|(customer, _)| Violation::Missing { customer }),
    );
    if groups.is_empty() {
        violations.push(Violation::NoSubgraphs);
    } else if groups.len() > inst.n_max() {
        violations.push(Violation::TooManySubgraphs {
            count: groups.len(),
            n_max: inst.n_max(),
        });
    }
    ValidationReport { violations }
}

/// Lists every violated partition invariant: coverage, disjointness,
/// per-subgraph demand, and subgraph count.
pub fn validate_partition(c: &PartitionSolution, inst: &Instance) -> ValidationReport {
    validate_groups(&c.subgraphs, inst)
}

pub fn validate_plan(plan: &RoutePlan, inst: &Instance) -> ValidationReport {
    validate_groups(&plan.tours, inst)
}

/// Forgets the visiting order: subgraph `i` is the node set of tour `i`.
pub fn partition_of_plan(plan: &RoutePlan) -> PartitionSolution {
    PartitionSolution::new(
        plan.tours
            .iter()
            .filter(|t| !t.is_empty())
            .map(|t| {
                let mut s = t.clone();
                s.sort_unstable();
                s
            })
            .collect(),
    )
}
