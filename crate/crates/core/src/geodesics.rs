//! Scene-level travel distances: geodesics on the dilated occupancy grid with
//! a read-mostly per-source cache, or straight-line distances when a scene has
//! no grid.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;

use crate::occupancy::{Cell, DistanceField, GridError, OccupancyGrid};
use crate::scene_graph::{NodeId, SceneError, SceneGraph};

/// Default robot footprint inflation in meters.
pub const DEFAULT_DILATION: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum GeodesicError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("node {0} has no position")]
    NoPosition(NodeId),
}

pub struct Geodesics {
    grid: Option<OccupancyGrid>,
    snap: RwLock<HashMap<(u64, u64), Cell>>,
    fields: RwLock<HashMap<Cell, Arc<DistanceField>>>,
}

impl std::fmt::Debug for Geodesics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Geodesics")
            .field("grid", &self.grid.as_ref().map(|g| (g.width(), g.height())))
            .field("cached_fields", &self.fields.read().len())
            .finish()
    }
}

impl Geodesics {
    /// Geodesics on `grid` dilated by `dilation` meters.
    pub fn on_grid(grid: &OccupancyGrid, dilation: f64) -> Self {
        Self::with_grid(Some(grid.dilate(dilation)))
    }

    /// Straight-line distances.
    pub fn euclidean() -> Self {
        Self::with_grid(None)
    }

    pub fn for_scene(scene: &SceneGraph, dilation: f64) -> Self {
        match scene.occupancy() {
            Some(g) => Self::on_grid(g, dilation),
            None => Self::euclidean(),
        }
    }

    fn with_grid(grid: Option<OccupancyGrid>) -> Self {
        Self { grid, snap: RwLock::new(HashMap::new()), fields: RwLock::new(HashMap::new()) }
    }

    /// The dilated grid, if any.
    pub fn grid(&self) -> Option<&OccupancyGrid> {
        self.grid.as_ref()
    }

    fn snap(&self, grid: &OccupancyGrid, p: [f64; 2]) -> Result<Cell, GridError> {
        let key = (p[0].to_bits(), p[1].to_bits());
        if let Some(c) = self.snap.read().get(&key) {
            return Ok(*c);
        }
        let c = grid.nearest_free(p, None)?;
        self.snap.write().insert(key, c);
        Ok(c)
    }

    fn field(&self, grid: &OccupancyGrid, source: Cell) -> Result<Arc<DistanceField>, GridError> {
        if let Some(f) = self.fields.read().get(&source) {
            return Ok(f.clone());
        }
        let f = Arc::new(grid.distance_field(source)?);
        self.fields.write().entry(source).or_insert(f.clone());
        Ok(f)
    }

    /// Travel distance in meters between two points; `None` when the snapped
    /// cells are disconnected.
    pub fn distance(&self, from: [f64; 2], to: [f64; 2]) -> Result<Option<f64>, GridError> {
        let Some(grid) = &self.grid else {
            return Ok(Some(((from[0] - to[0]).powi(2) + (from[1] - to[1]).powi(2)).sqrt()));
        };
        let a = self.snap(grid, from)?;
        let b = self.snap(grid, to)?;
        Ok(self.field(grid, a)?.distance(b))
    }

    /// Distance from a point to a node's xy position.
    pub fn geodesic_to_node(
        &self,
        scene: &SceneGraph,
        from: [f64; 2],
        node: NodeId,
    ) -> Result<Option<f64>, GeodesicError> {
        let n = scene.get(node)?;
        let to = n.xy().ok_or(GeodesicError::NoPosition(node))?;
        Ok(self.distance(from, to)?)
    }
}
