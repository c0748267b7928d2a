//! Shared inputs for the benchmarks.

use wpd::{synth, PointCloud};

/// Unit sphere samples, fixed seed.
pub fn sphere(count: usize) -> PointCloud {
    synth::sphere(count, 1.0, 17)
}

/// Two-face dihedral with crease labels, fixed seed.
pub fn dihedral(count: usize) -> PointCloud {
    synth::dihedral(count, 0.02, 17)
}
