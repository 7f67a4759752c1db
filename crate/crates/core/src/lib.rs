//! Topology-preserving medial axis transform of tetrahedralized solids via
//! volumetric restricted power diagrams.
//!
//! The pipeline starts from a handful of medial spheres, computes the power
//! diagram restricted to the input tet mesh, and adaptively inserts spheres
//! until every restricted element is a topological disk (CC = 1, Euler = 1),
//! sharp features are owned by zero-radius feature spheres, and the envelope
//! of the medial mesh approximates the surface within a user bound.

pub mod bvh;
pub mod features;
pub mod geometry;
pub mod math;
pub mod medial;
pub mod mesh;
pub mod pipeline;
pub mod rpd;
pub mod sphere;
pub mod synth;
pub mod topo;

pub use mesh::TetMesh;
pub use sphere::{MedialSphere, SphereKind, SphereSet};
