//! B-spline and periodic NURBS tube geometry.

pub mod curve;
pub mod frames;
pub mod io;
pub mod knots;
pub mod mesh;
pub mod surface;
pub mod vec3;
pub mod vessel;

pub use curve::{fit_curve, uniform_params, ControlPolygon, CurveSampler};
pub use frames::{
    align_radial_frames, initial_radial_direction, radial_directions, rotate, unit_contour,
    unit_contour_from, Alignment, ContourSeed, DegeneratePolicy, VesselSkeleton,
};
pub use knots::{BasisValues, KnotVector};
pub use mesh::{parse_obj, PolyMesh, QuadMesh};
pub use surface::{
    eval_mesh, eval_surface, skeleton_points, RadialProfile, SurfaceControlGrid, SurfaceSampler,
};
pub use vec3::{bbox_diagonal, centroid, Vec3};
pub use vessel::{SurfaceMap, VesselLatent};

/// Streamwise and radial degree used everywhere.
pub const DEFAULT_DEGREE: usize = 3;
