//! Simultaneous localization and meshing for 3-D LiDAR.
//!
//! The map is a hash map of cubic cells. Inside each cell a Gaussian process
//! regresses the local surface onto a fixed grid of vertices whose two
//! *location* coordinates are evenly spaced and whose remaining *prediction*
//! coordinate is continuous. Vertices are connected into triangle faces,
//! new scans are aligned to the map with a point-to-mesh least-squares
//! solver on SE3, and aligned observations are fused back into the vertex
//! predictions by precision weighting.

pub mod error;
pub mod geometry;
pub mod gp;
pub mod io;
pub mod map;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod registration;
pub mod sim;

pub use error::{Error, Result};
pub use geometry::{Point3, Pose, Twist};
pub use gp::{GpConfig, Layer};
pub use io::{Axis, CellIndex, RawScan};
pub use map::MeshMap;
pub use mesh::TriangleMesh;
pub use pipeline::{run_sequence, PipelineConfig, SlamPipeline};
