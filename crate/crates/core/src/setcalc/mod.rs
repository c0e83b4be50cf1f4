//! Polyhedral set calculus: H-form polyhedra, their generators, and finite
//! unions of affine images of polyhedra.

pub mod dd;
pub mod hull;
pub mod polyhedron;
pub mod polyset;

pub use hull::{caratheodory_supports, ConvexHull, HullCertificate};
pub use polyhedron::{Polyhedron, VForm, VERTEX_DIM_GUARD};
pub use polyset::{Affine, Membership, Piece, PolySet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SetError {
    #[error("vertex enumeration refused: dimension {dim} exceeds the guard {limit}")]
    DimensionGuard { dim: usize, limit: usize },
}
