use proptest::prelude::*;
use qqual_core::qdnn::QdnnModel;
use qqual_core::qsim::{
    parameter_shift_jacobian, run_circuit, AngleSource, CircuitSpec, Gate, Observable, Pauli,
};
use qqual_core::Task;

fn ring_circuit(n: usize) -> CircuitSpec {
    let mut layers = vec![(0..n)
        .map(|q| Gate::rx(q, AngleSource::Feature(q)))
        .collect::<Vec<_>>()];
    let mut block: Vec<Gate> = (0..n).map(|q| Gate::ry(q, AngleSource::Param(q))).collect();
    if n > 1 {
        block.extend((0..n).map(|q| Gate::cnot(q, (q + 1) % n)));
    }
    layers.push(block);
    let obs = (0..n)
        .flat_map(|q| [Pauli::X, Pauli::Y, Pauli::Z].map(|axis| Observable { qubit: q, axis }))
        .collect();
    CircuitSpec::new(n, layers, obs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bloch_vectors_stay_in_the_ball(n in 1usize..=4, seed in any::<u64>()) {
        let spec = ring_circuit(n);
        let mut x = seed;
        let mut next = || { x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (x >> 11) as f64 / (1u64 << 53) as f64 * 6.0 - 3.0 };
        let params: Vec<f64> = (0..n).map(|_| next()).collect();
        let features: Vec<f64> = (0..n).map(|_| next()).collect();
        let (state, values) = run_circuit(&spec, &params, &features).unwrap();
        prop_assert!((state.norm_sqr() - 1.0).abs() < 1e-12);
        for q in 0..n {
            let r2: f64 = values[3 * q..3 * q + 3].iter().map(|v| v * v).sum();
            prop_assert!(r2 <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn jacobian_rows_are_bounded(n in 1usize..=4, t in -3.0f64..3.0) {
        let spec = ring_circuit(n);
        let params = vec![t; n];
        let features = vec![0.5 * t; n];
        let jac = parameter_shift_jacobian(&spec, &params, &features).unwrap();
        prop_assert_eq!(jac.jacobian.len(), 3 * n);
        for row in jac.jacobian {
            prop_assert!(row.iter().all(|g| g.abs() <= 1.0 + 1e-12));
        }
    }
}

#[test]
fn qdnn_outputs_respect_the_readout_range() {
    let model = QdnnModel::build(4, 2, Task::Classification, 3).unwrap();
    for i in 0..50 {
        let x: Vec<f64> = (0..4)
            .map(|j| ((i * 7 + j * 3) % 13) as f64 * 0.4 - 2.4)
            .collect();
        let p = model.forward(&x).unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}
