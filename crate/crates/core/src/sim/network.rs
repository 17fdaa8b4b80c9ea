use std::collections::HashMap;

use crate::coordinator::DensityLookup;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::ids::EdgeId;

/// Consecutive route edges must meet within this distance.
pub const ROUTE_JOIN_TOLERANCE_M: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub geometry: Vec<Point>,
    pub speed_limit_kmh: f64,
    /// Relative likelihood that a cyclist uses this edge; 1.0 when unknown.
    pub density_weight: f64,
    cumulative: Vec<f64>,
}

impl Edge {
    pub fn new(
        id: EdgeId,
        geometry: Vec<Point>,
        speed_limit_kmh: f64,
        density_weight: f64,
    ) -> Result<Self> {
        if geometry.len() < 2 {
            return Err(Error::Domain(format!(
                "edge {id}: geometry needs at least two points"
            )));
        }
        if geometry.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain(format!("edge {id}: geometry is not finite")));
        }
        if !(speed_limit_kmh > 0.0 && speed_limit_kmh.is_finite()) {
            return Err(Error::Domain(format!("edge {id}: speed limit must be > 0")));
        }
        if !(density_weight >= 1.0 && density_weight.is_finite()) {
            return Err(Error::Domain(format!(
                "edge {id}: density weight must be >= 1"
            )));
        }
        let mut cumulative = Vec::with_capacity(geometry.len());
        let mut total = 0.0;
        cumulative.push(0.0);
        for pair in geometry.windows(2) {
            total += pair[0].distance(pair[1]);
            cumulative.push(total);
        }
        if !(total > 0.0) {
            return Err(Error::Domain(format!("edge {id}: length must be positive")));
        }
        Ok(Self {
            id,
            geometry,
            speed_limit_kmh,
            density_weight,
            cumulative,
        })
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("edge has geometry")
    }

    pub fn start(&self) -> Point {
        self.geometry[0]
    }

    pub fn end(&self) -> Point {
        *self.geometry.last().expect("edge has geometry")
    }

    /// Position `offset` meters along the polyline, clamped to the edge.
    pub fn position_at(&self, offset: f64) -> Point {
        let offset = offset.clamp(0.0, self.length());
        let seg = self
            .cumulative
            .partition_point(|&c| c <= offset)
            .clamp(1, self.geometry.len() - 1);
        let (c0, c1) = (self.cumulative[seg - 1], self.cumulative[seg]);
        let t = if c1 > c0 {
            (offset - c0) / (c1 - c0)
        } else {
            0.0
        };
        self.geometry[seg - 1].lerp(self.geometry[seg], t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    edges: Vec<Edge>,
    index: HashMap<EdgeId, usize>,
}

impl RoadNetwork {
    pub fn new(edges: Vec<Edge>) -> Result<Self> {
        let mut index = HashMap::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            if index.insert(e.id.clone(), i).is_some() {
                return Err(Error::Domain(format!("duplicate edge id {}", e.id)));
            }
        }
        Ok(Self { edges, index })
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, idx: usize) -> &Edge {
        &self.edges[idx]
    }

    pub fn index_of(&self, id: &EdgeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &EdgeId) -> Option<&Edge> {
        self.index_of(id).map(|i| &self.edges[i])
    }

    /// Overrides density weights, e.g. from a separate weight file.
    pub fn set_density_weight(&mut self, id: &EdgeId, weight: f64) -> Result<()> {
        if !(weight >= 1.0 && weight.is_finite()) {
            return Err(Error::Domain(format!(
                "edge {id}: density weight must be >= 1"
            )));
        }
        let idx = self
            .index_of(id)
            .ok_or_else(|| Error::Domain(format!("unknown edge {id}")))?;
        self.edges[idx].density_weight = weight;
        Ok(())
    }

    /// Resolves a route to edge indices, checking that consecutive edges join.
    pub fn resolve_route(&self, route: &[EdgeId]) -> Result<Vec<usize>> {
        if route.is_empty() {
            return Err(Error::Domain("route is empty".into()));
        }
        let idx = route
            .iter()
            .map(|id| {
                self.index_of(id)
                    .ok_or_else(|| Error::Domain(format!("unknown edge {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        for pair in idx.windows(2) {
            let (a, b) = (&self.edges[pair[0]], &self.edges[pair[1]]);
            if a.end().distance(b.start()) > ROUTE_JOIN_TOLERANCE_M {
                return Err(Error::Domain(format!(
                    "edge {} does not end where edge {} starts",
                    a.id, b.id
                )));
            }
        }
        Ok(idx)
    }
}

impl DensityLookup for RoadNetwork {
    fn density_weight(&self, edge: &EdgeId) -> f64 {
        self.get(edge).map_or(1.0, |e| e.density_weight)
    }
}
