//! Fixtures shared by the criterion benches.

use ssofr_core::{
    build_basis, project_curves, simulate, BasisKind, BasisSystem, CoefficientMatrix, Contiguity, DVector, SimOutput,
    SimSpec, SimWeights,
};

pub struct Fixture {
    pub sim: SimOutput,
    pub basis: BasisSystem,
    pub coeffs: CoefficientMatrix,
    pub y: DVector<f64>,
}

/// Rook lattice of `rows × cols` units, cubic B-spline basis of size `m`.
pub fn fixture(rows: usize, cols: usize, m: usize, seed: u64) -> Fixture {
    let spec = SimSpec {
        n: rows * cols,
        seed,
        weights: SimWeights::Lattice { rows, cols, contiguity: Contiguity::Rook },
        ..Default::default()
    };
    let sim = simulate(&spec).expect("valid simulation spec");
    let basis = build_basis(BasisKind::Bspline { degree: 3 }, m, sim.dataset.grid()).expect("valid basis");
    let coeffs = project_curves(&sim.dataset, &basis).expect("projection");
    let y = sim.dataset.response().expect("simulated response").clone();
    Fixture { sim, basis, coeffs, y }
}
