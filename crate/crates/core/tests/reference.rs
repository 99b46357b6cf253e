use emdict::bench::{fit_through_origin, run_point, KeyDist, Mix, Op, Structure, WorkloadSpec};
use emdict::{BaselineBufferTree, OracleMap};
use proptest::prelude::*;

#[test]
fn oracle_semantics() {
    let mut o = OracleMap::new();
    assert_eq!(o.lookup(1), None);
    o.insert(1, 10);
    o.insert(1, 11);
    o.insert(2, 20);
    assert_eq!(o.lookup(1), Some(11));
    assert_eq!(o.live_len(), 2);
    o.delete(1);
    o.delete(3);
    assert_eq!(o.lookup(1), None);
    assert_eq!(o.live_len(), 1);
    assert_eq!(o.live_keys(), vec![2]);
    assert_eq!(o.ops(), 5);
}

#[test]
fn baseline_matches_oracle_on_mixed_ops() {
    for fanout in [2usize, 16] {
        let spec = WorkloadSpec {
            n_max: 1 << 14,
            ops: 100_000,
            seed: 21,
            ..WorkloadSpec::default()
        };
        let mut t = BaselineBufferTree::new(fanout, 64, 64).unwrap();
        let mut o = OracleMap::new();
        for (i, op) in spec.ops().enumerate() {
            match op {
                Op::Insert(k, v) => {
                    t.insert(k, v).unwrap();
                    o.insert(k, v);
                }
                Op::Delete(k) => {
                    t.delete(k).unwrap();
                    o.delete(k);
                }
                Op::Lookup(k) => assert_eq!(t.lookup(k).unwrap(), o.lookup(k), "fan-out {fanout}, op {i}"),
            }
        }
        assert!(t.check_invariants().unwrap().is_empty());
    }
}

fn measure(lambda: u64) -> emdict::bench::BenchRow {
    let spec = WorkloadSpec {
        n_max: 1 << 16,
        lambda,
        ops: 1 << 17,
        mix: Mix::new(50, 0, 50).unwrap(),
        keys: KeyDist::Uniform64,
        seed: 22,
        ..WorkloadSpec::default()
    };
    run_point(Structure::Baseline, &spec).unwrap()
}

#[test]
fn update_cost_tracks_fanout_times_height() {
    let rows: Vec<_> = [2u64, 4, 8, 16].into_iter().map(measure).collect();
    let x: Vec<f64> = rows.iter().map(|r| r.lambda as f64 * 16.0 / 64.0).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.upd_total()).collect();
    let (c, r2) = fit_through_origin(&x, &y);
    assert!(c > 0.0);
    assert!(r2 >= 0.8, "r2 = {r2}, y = {y:?}");
    let q: Vec<f64> = rows.iter().map(|r| r.q_reads).collect();
    assert!(q.windows(2).all(|w| w[1] < w[0]), "query reads {q:?}");
}

#[test]
fn lookups_never_write() {
    let mut t = BaselineBufferTree::new(8, 64, 64).unwrap();
    for k in 0..5000u64 {
        t.insert(k.wrapping_mul(0x2545_F491_4F6C_DD1D), k).unwrap();
    }
    let w = t.io_stats().writes;
    for k in 0..5000u64 {
        assert_eq!(t.lookup(k.wrapping_mul(0x2545_F491_4F6C_DD1D)).unwrap(), Some(k));
    }
    assert_eq!(t.io_stats().writes, w);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn baseline_equals_oracle(fanout in 2usize..9, ops in prop::collection::vec((0u8..3, 0u64..300, any::<u64>()), 1..3000)) {
        let mut t = BaselineBufferTree::new(fanout, 64, 64).unwrap();
        let mut o = OracleMap::new();
        for (kind, k, v) in ops {
            match kind {
                0 => { t.insert(k, v).unwrap(); o.insert(k, v); }
                1 => { t.delete(k).unwrap(); o.delete(k); }
                _ => prop_assert_eq!(t.lookup(k).unwrap(), o.lookup(k)),
            }
        }
        prop_assert!(t.check_invariants().unwrap().is_empty());
    }
}
