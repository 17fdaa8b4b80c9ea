//! Polluting-mode probability assignment inside a geofence.
//!
//! Each vehicle `i` in the fence gets `x_i` in `[0, 1]`, the probability it
//! stays in polluting mode until the next decision. The assignment solves
//!
//! ```text
//! maximize   sum_i x_i / d_i
//! subject to sum_i x_i * e_i <= limit,   0 <= x_i <= 1
//! ```
//!
//! where `d_i >= 1` is the cyclist density weight of the vehicle's road and
//! `e_i` its emission rate in g/min. This is a fractional knapsack, so the
//! greedy fill by value density `1 / (d_i e_i)` is optimal.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::VehicleId;

/// Budget slack allowed on the emission constraint.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// Largest instance [`brute_force_solve`] accepts.
pub const BRUTE_FORCE_MAX_ENTRIES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemEntry {
    pub vehicle_id: VehicleId,
    /// Cyclist density weight of the occupied road, at least 1.
    pub density: f64,
    /// Polluting-mode emission rate, g/min.
    pub emission: f64,
}

impl ProblemEntry {
    pub fn new(vehicle_id: VehicleId, density: f64, emission: f64) -> Self {
        Self {
            vehicle_id,
            density,
            emission,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeofenceProblem {
    entries: Vec<ProblemEntry>,
    limit: f64,
}

impl GeofenceProblem {
    /// Builds a problem, checking weights, rates and id uniqueness.
    pub fn new(entries: Vec<ProblemEntry>, limit: f64) -> Result<Self> {
        if !limit.is_finite() {
            return Err(Error::Domain(format!(
                "emission limit must be finite, got {limit}"
            )));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for entry in &entries {
            if !(entry.density >= 1.0) || !entry.density.is_finite() {
                return Err(Error::Domain(format!(
                    "vehicle {}: density weight must be finite and >= 1, got {}",
                    entry.vehicle_id, entry.density
                )));
            }
            if !(entry.emission >= 0.0) || !entry.emission.is_finite() {
                return Err(Error::Domain(format!(
                    "vehicle {}: emission rate must be finite and >= 0, got {}",
                    entry.vehicle_id, entry.emission
                )));
            }
            if !seen.insert(entry.vehicle_id) {
                return Err(Error::Domain(format!(
                    "duplicate vehicle id {}",
                    entry.vehicle_id
                )));
            }
        }
        Ok(Self { entries, limit })
    }

    pub fn entries(&self) -> &[ProblemEntry] {
        &self.entries
    }

    pub fn limit(&self) -> f64 {
        self.limit
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-vehicle polluting probabilities, in the order of the problem entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    values: Vec<(VehicleId, f64)>,
    objective_value: f64,
}

impl Assignment {
    fn from_values(problem: &GeofenceProblem, xs: Vec<f64>) -> Self {
        let objective_value = problem
            .entries
            .iter()
            .zip(&xs)
            .map(|(entry, x)| x / entry.density)
            .sum();
        let values = problem
            .entries
            .iter()
            .zip(xs)
            .map(|(entry, x)| (entry.vehicle_id, x))
            .collect();
        Self {
            values,
            objective_value,
        }
    }

    pub fn get(&self, id: VehicleId) -> Option<f64> {
        self.values.iter().find(|(v, _)| *v == id).map(|&(_, x)| x)
    }

    pub fn values(&self) -> &[(VehicleId, f64)] {
        &self.values
    }

    pub fn objective_value(&self) -> f64 {
        self.objective_value
    }

    /// Expected emission `sum x_i e_i` of this assignment under `problem`.
    pub fn expected_emission(&self, problem: &GeofenceProblem) -> f64 {
        problem
            .entries
            .iter()
            .map(|entry| self.get(entry.vehicle_id).unwrap_or(0.0) * entry.emission)
            .sum()
    }
}

/// Optimal assignment by greedy fractional-knapsack fill.
///
/// A non-positive limit switches every vehicle to electric. Zero-emission
/// entries are set to 1. The rest are filled in ascending order of
/// `d_i * e_i` (ties: lower `d_i`, then input order) until the budget runs
/// out; at most one entry ends up fractional.
pub fn solve(problem: &GeofenceProblem) -> Assignment {
    let n = problem.entries.len();
    let mut xs = vec![0.0; n];
    if problem.limit <= 0.0 {
        return Assignment::from_values(problem, xs);
    }

    let mut costly = Vec::with_capacity(n);
    for (i, entry) in problem.entries.iter().enumerate() {
        if entry.emission == 0.0 {
            xs[i] = 1.0;
        } else {
            costly.push(i);
        }
    }
    // Stable sort keeps input order as the final tie-break.
    costly.sort_by(|&i, &j| {
        let (a, b) = (&problem.entries[i], &problem.entries[j]);
        (a.density * a.emission)
            .partial_cmp(&(b.density * b.emission))
            .unwrap_or(Ordering::Equal)
            .then(a.density.partial_cmp(&b.density).unwrap_or(Ordering::Equal))
    });

    let mut remaining = problem.limit;
    for i in costly {
        if remaining <= 0.0 {
            break;
        }
        let e = problem.entries[i].emission;
        if e <= remaining {
            xs[i] = 1.0;
            remaining -= e;
        } else {
            xs[i] = remaining / e;
            remaining = 0.0;
        }
    }
    Assignment::from_values(problem, xs)
}

/// Exhaustive reference solver for small instances.
///
/// An optimal basic solution has every `x_i` in `{0, 1}` except at most one
/// fractional `x_j = (limit - sum_{i in S} e_i) / e_j`. All subsets `S` and
/// all fractional indices outside them are enumerated.
pub fn brute_force_solve(problem: &GeofenceProblem) -> Result<Assignment> {
    let n = problem.entries.len();
    if n > BRUTE_FORCE_MAX_ENTRIES {
        return Err(Error::Size {
            entries: n,
            max: BRUTE_FORCE_MAX_ENTRIES,
        });
    }
    if problem.limit <= 0.0 {
        return Ok(Assignment::from_values(problem, vec![0.0; n]));
    }
    let e: Vec<f64> = problem.entries.iter().map(|p| p.emission).collect();
    let w: Vec<f64> = problem.entries.iter().map(|p| 1.0 / p.density).collect();

    let mut best_value = f64::NEG_INFINITY;
    let mut best = vec![0.0; n];
    for mask in 0u32..(1 << n) {
        let in_set = |i: usize| mask & (1 << i) != 0;
        let used: f64 = (0..n).filter(|&i| in_set(i)).map(|i| e[i]).sum();
        if used > problem.limit + BUDGET_TOLERANCE {
            continue;
        }
        let base: f64 = (0..n).filter(|&i| in_set(i)).map(|i| w[i]).sum();
        let mut consider = |frac: Option<(usize, f64)>| {
            let value = base + frac.map_or(0.0, |(j, x)| w[j] * x);
            if value > best_value {
                best_value = value;
                best = (0..n).map(|i| if in_set(i) { 1.0 } else { 0.0 }).collect();
                if let Some((j, x)) = frac {
                    best[j] = x;
                }
            }
        };
        consider(None);
        let slack = (problem.limit - used).max(0.0);
        for j in (0..n).filter(|&j| !in_set(j) && e[j] > 0.0) {
            let x = slack / e[j];
            if x <= 1.0 {
                consider(Some((j, x)));
            }
        }
    }
    Ok(Assignment::from_values(problem, best))
}

/// `sum x_i / d_i` over the problem's vehicles.
pub fn objective(assignment: &Assignment, problem: &GeofenceProblem) -> Result<f64> {
    problem
        .entries
        .iter()
        .map(|entry| {
            assignment
                .get(entry.vehicle_id)
                .map(|x| x / entry.density)
                .ok_or_else(|| {
                    Error::Domain(format!(
                        "assignment has no value for vehicle {}",
                        entry.vehicle_id
                    ))
                })
        })
        .sum()
}
