#![allow(dead_code)]

use geomeasure::states::{
    DensityMatrix, ProductState, PureState, RawEnsemble, SeparableEnsemble, SpaceShape, C64,
};

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn qubits(m: usize) -> SpaceShape {
    SpaceShape::qubits(m).unwrap()
}

pub fn shape(dims: &[usize]) -> SpaceShape {
    SpaceShape::new(dims.to_vec()).unwrap()
}

pub fn basis(shape: &SpaceShape, digits: &[usize]) -> ProductState {
    ProductState::basis(shape.clone(), digits).unwrap()
}

pub fn pure(shape: &SpaceShape, amps: &[f64]) -> PureState {
    PureState::normalized(shape.clone(), amps.iter().map(|&a| c(a, 0.0)).collect()).unwrap()
}

pub fn bell() -> PureState {
    pure(&qubits(2), &[1.0, 0.0, 0.0, 1.0])
}

pub fn w3() -> PureState {
    pure(&qubits(3), &[0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0])
}

pub fn ghz3() -> PureState {
    pure(&qubits(3), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
}

pub fn maximally_mixed(shape: &SpaceShape) -> DensityMatrix {
    let n = shape.total_dim();
    let mut data = vec![c(0.0, 0.0); n * n];
    for i in 0..n {
        data[i * n + i] = c(1.0 / n as f64, 0.0);
    }
    DensityMatrix::from_row_major(shape.clone(), &data).unwrap()
}

/// Rows `p, x11, x12, x21, x22, y11, y12, y21, y22` of the published nearest
/// disentangled state for Example 1 at α = 0.5.
pub const TABLE1: [[f64; 9]; 4] = [
    [
        0.0414, 0.4495, 0.4497, 0.6749, 0.6747, 0.5458, 0.5457, 0.2113, 0.2114,
    ],
    [
        0.2163, 0.5211, 0.5210, 0.1227, 0.1227, 0.4780, 0.4781, 0.6963, 0.6964,
    ],
    [
        0.5000, 0.5572, -0.5572, -0.7061, 0.7061, -0.4353, 0.4353, 0.0369, -0.0369,
    ],
    [
        0.2423, 0.6908, 0.6909, 0.3020, 0.3020, 0.1506, 0.1508, 0.6393, 0.6395,
    ],
];

pub fn table1_raw() -> RawEnsemble {
    let factors = TABLE1
        .iter()
        .map(|r| {
            vec![
                vec![c(r[1], r[5]), c(r[2], r[6])],
                vec![c(r[3], r[7]), c(r[4], r[8])],
            ]
        })
        .collect();
    RawEnsemble {
        shape: qubits(2),
        weights: TABLE1.iter().map(|r| r[0]).collect(),
        factors,
    }
}

pub fn table1() -> SeparableEnsemble {
    table1_raw().normalized().unwrap()
}
