mod common;

use common::*;
use fvpatch::bench::init_field;
use fvpatch::{BatchShape, DeviceArena, EulerParameters, KernelPlan, WorkerPool};

fn check_against_reference(field: &fvpatch::ScatteredPatchSet, pool: &WorkerPool) {
    for with_reduction in [false, true] {
        let plan = KernelPlan::new(field.shape(), with_reduction);
        let (expected, expected_lambda) = dense_reference(field, with_reduction);
        for launch in Launch::all() {
            let (out, outcome, _) = launch.run(&plan, field, pool, &mut DeviceArena::new());
            if let Some((patch, i, e, a)) = first_difference(&expected, &out) {
                panic!(
                    "{launch:?} {}: patch {patch} entry {i}: {e:e} vs {a:e}",
                    field.shape()
                );
            }
            assert_eq!(
                outcome.reduced_eigenvalue.map(f64::to_bits),
                expected_lambda.map(f64::to_bits),
                "{launch:?}"
            );
        }
    }
}

#[test]
fn single_patch_random_field_matches_dense_reference() {
    let shape = BatchShape::new(2, 4, 1).unwrap();
    check_against_reference(&random_field(shape, 1), &WorkerPool::new(2).unwrap());
}

#[test]
fn random_fields_match_dense_reference() {
    let pool = WorkerPool::new(4).unwrap();
    for (d, p, t) in [(2, 6, 3), (3, 4, 2), (2, 8, 1), (3, 6, 1)] {
        let shape = BatchShape::new(d, p, t).unwrap();
        check_against_reference(&random_field(shape, 7 + d as u64 * 31 + p as u64), &pool);
    }
}

#[test]
fn smooth_fields_match_dense_reference() {
    let pool = WorkerPool::new(3).unwrap();
    let params = EulerParameters::new(GAMMA).unwrap();
    for (d, p, t) in [(2, 4, 5), (3, 4, 3)] {
        let shape = BatchShape::new(d, p, t).unwrap();
        check_against_reference(&init_field(shape, 11, params).unwrap(), &pool);
    }
}

#[test]
fn reduction_equals_max_over_dumped_output() {
    let shape = BatchShape::new(3, 4, 4).unwrap();
    let field = random_field(shape, 3);
    let plan = KernelPlan::new(shape, true);
    let pool = WorkerPool::new(4).unwrap();
    for launch in Launch::all() {
        let (out, outcome, _) = launch.run(&plan, &field, &pool, &mut DeviceArena::new());
        let brute = out
            .iter()
            .flat_map(|patch| patch.chunks(5))
            .flat_map(|q| (0..3).map(move |n| wave_speed(q, n, GAMMA)))
            .fold(0.0, f64::max);
        assert_eq!(
            outcome.reduced_eigenvalue.unwrap().to_bits(),
            brute.to_bits(),
            "{launch:?}"
        );
    }
}
