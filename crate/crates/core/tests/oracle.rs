//! Dense and TEBD oracles against each other and against symmetry.

use holoquads::estimator::bin_symmetry;
use holoquads::linalg::{haar_unitary, Pauli};
use holoquads::oracle::{dense_correlators, tebd_correlators, tebd_pair_values, AveragingWindow, OracleSpec, TebdConfig};
use holoquads::sdki::{SolvableMps, PAPER_FIELD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn dense_and_tebd_tables_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let haar = SolvableMps::from_unitary(haar_unitary(4, &mut rng)).unwrap();
    for mps in [SolvableMps::paper(), haar] {
        for t in 0..=3usize {
            let cells = 6 - t.div_ceil(2);
            let mut spec = OracleSpec::xx(PAPER_FIELD, t, AveragingWindow::full(2 * cells));
            spec.pairs.push((Pauli::Z, Pauli::Z));
            let a = dense_correlators(&spec, &mps.cell_mps()).unwrap();
            let b = tebd_correlators(&spec, &mps.cell_mps(), &TebdConfig::default()).unwrap();
            assert_eq!(a.len(), b.len());
            assert!(a.max_abs_diff(&b).unwrap() < 1e-9, "t = {t}");
        }
    }
}

#[test]
fn initial_values_do_not_depend_on_chain_length() {
    let mps = SolvableMps::paper().cell_mps();
    let values = |two_l| {
        let spec = OracleSpec::xx(PAPER_FIELD, 0, AveragingWindow::full(two_l));
        tebd_pair_values(&spec, &mps, &TebdConfig::default(), Pauli::X, Pauli::X).unwrap()
    };
    let (short, long) = (values(8), values(20));
    for j in 1..=8 {
        for k in j..=8 {
            assert!((short.get(j, k) - long.get(j, k)).abs() < 1e-10, "({j}, {k})");
        }
    }
}

#[test]
fn binning_is_lossless_at_t0() {
    let mps = SolvableMps::paper().cell_mps();
    let spec = OracleSpec::xx(PAPER_FIELD, 0, AveragingWindow::standard(32));
    let table = tebd_correlators(&spec, &mps, &TebdConfig::default()).unwrap();
    let binned = bin_symmetry(&table).unwrap();
    for b in binned.entries.iter().filter(|e| e.r >= 2) {
        for r in [b.r, b.r + 1] {
            if let Some(m) = table.get(Pauli::X, Pauli::X, r, 0, false) {
                assert!((m.value - b.value).abs() < 1e-10, "r = {r}: {} vs {}", m.value, b.value);
            }
        }
    }
}

#[test]
fn more_padding_and_bond_do_not_change_results() {
    let mps = SolvableMps::paper().cell_mps();
    let spec = OracleSpec::xx(PAPER_FIELD, 4, AveragingWindow::standard(32));
    let base = tebd_correlators(&spec, &mps, &TebdConfig::default()).unwrap();
    let doubled = TebdConfig { right_padding_cells: Some(4), max_bond: 1024, ..Default::default() };
    let other = tebd_correlators(&spec, &mps, &doubled).unwrap();
    assert!(base.max_abs_diff(&other).unwrap() < 1e-8);
}

#[test]
fn values_stay_within_one() {
    let mps = SolvableMps::paper().cell_mps();
    for t in 0..=3 {
        let table = tebd_correlators(&OracleSpec::xx(PAPER_FIELD, t, AveragingWindow::standard(32)), &mps, &TebdConfig::default())
            .unwrap();
        assert!(table.entries.iter().all(|e| e.value.abs() <= 1.0 + 1e-12));
    }
}
