use approx::assert_abs_diff_eq;
use ndarray::{array, Array2};
use tmf_core::check::{run_suite, Mutation, Suite};
use tmf_core::ctc::{extend_with_blanks, forward_backward, occupancy, LabelSequence, OccupancyMode};
use tmf_core::losses::{ecl, CenterBank};
use tmf_core::posterior::PosteriorMatrix;

fn worked_example() -> PosteriorMatrix {
    PosteriorMatrix::from_probs(array![
        [0.5, 0.3, 0.2],
        [0.2, 0.5, 0.3],
        [0.3, 0.2, 0.5],
        [0.6, 0.1, 0.3]
    ])
    .unwrap()
}

// Reference values below were enumerated path by path outside this crate.

#[test]
fn sequence_probability_matches_enumeration() {
    let y = worked_example();
    let zp = extend_with_blanks(&LabelSequence::new(vec![1, 2]).unwrap());
    let tables = forward_backward(&y, &zp).unwrap();
    assert_abs_diff_eq!(tables.log_seq_prob.exp(), 0.33510000000000006, epsilon = 1e-15);
}

#[test]
fn occupancies_match_enumeration() {
    let y = worked_example();
    let zp = extend_with_blanks(&LabelSequence::new(vec![1, 2]).unwrap());
    let tables = forward_backward(&y, &zp).unwrap();
    let literal: Array2<f64> = array![
        [0.078, 0.05373, 0.0, 0.0, 0.0],
        [0.0012, 0.12, 0.00648, 0.01701, 0.0],
        [0.0, 0.006, 0.01242, 0.12375, 0.00486],
        [0.0, 0.0, 0.0, 0.04617, 0.10872]
    ];
    let normalized: Array2<f64> = array![
        [0.46553267681289157, 0.5344673231871082, 0.0, 0.0, 0.0],
        [0.01790510295434199, 0.7162041181736795, 0.0966875559534467, 0.16920322291853174, 0.0],
        [0.0, 0.08952551477170992, 0.12354521038495969, 0.7385854968666068, 0.04834377797672335],
        [0.0, 0.0, 0.0, 0.4592658907788718, 0.540734109221128]
    ];
    let g = occupancy(&tables, &y, OccupancyMode::PaperLiteral).unwrap();
    for (a, b) in g.gamma.iter().zip(literal.iter()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
    }
    let g = occupancy(&tables, &y, OccupancyMode::FrameNormalized).unwrap();
    for (a, b) in g.gamma.iter().zip(normalized.iter()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
    }
}

#[test]
fn expected_center_loss_matches_enumeration() {
    let y = worked_example();
    let zp = extend_with_blanks(&LabelSequence::new(vec![1, 2]).unwrap());
    let tables = forward_backward(&y, &zp).unwrap();
    let u = array![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [-1.0, 0.5]];
    let mut bank = CenterBank::for_temporal(3, 2, 1e-3, 0.01).unwrap();
    bank.set_center(1, vec![0.5, 0.5]).unwrap();
    bank.set_center(2, vec![1.0, -1.0]).unwrap();
    for (mode, expected) in [
        (OccupancyMode::PaperLiteral, 1.6569375000000002),
        (OccupancyMode::FrameNormalized, 11.453670546105638),
    ] {
        let gamma = occupancy(&tables, &y, mode).unwrap();
        assert_abs_diff_eq!(ecl(u.view(), &gamma, &zp, &bank).unwrap(), expected, epsilon = 1e-13);
    }
}

fn assert_suite(suite: Suite, cases: usize, tolerance: f64) {
    let r = run_suite(suite, 11, Mutation::None).unwrap();
    println!("{r}");
    assert_eq!(r.cases, cases);
    assert!(r.tolerance <= tolerance);
    assert!(r.passed(), "{r}");
}

#[test]
fn sequence_probability_on_200_random_instances() {
    assert_suite(Suite::SeqProb, 200, 1e-10);
}

#[test]
fn occupancy_and_ecl_on_100_random_instances() {
    assert_suite(Suite::Occupancy, 100, 1e-9);
}

#[test]
fn labelings_partition_unity() {
    assert_suite(Suite::Partition, 20, 1e-9);
}

#[test]
fn forward_backward_consistency_identity() {
    assert_suite(Suite::Consistency, 50, 1e-9);
}
