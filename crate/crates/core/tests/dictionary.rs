use emdict::bench::{KeyDist, Mix, Op, WorkloadSpec};
use emdict::{DictParams, Dictionary, Error, OracleMap};

fn small(n_max: u64, seed: u64) -> Dictionary {
    Dictionary::new(DictParams {
        n_max,
        seed,
        ..DictParams::default()
    })
    .unwrap()
}

#[test]
fn empty_lookup_is_not_found() {
    let d = small(1 << 12, 1);
    assert_eq!(d.lookup(42).unwrap(), None);
    assert_eq!(d.io_stats().total(), 0);
}

#[test]
fn insert_overwrite_delete() {
    let mut d = small(1 << 12, 2);
    d.insert(7, 70).unwrap();
    assert_eq!(d.lookup(7).unwrap(), Some(70));
    d.insert(7, 71).unwrap();
    assert_eq!(d.lookup(7).unwrap(), Some(71));
    d.delete(7).unwrap();
    assert_eq!(d.lookup(7).unwrap(), None);
    // Deleting an absent key is harmless.
    d.delete(12345).unwrap();
    assert_eq!(d.lookup(12345).unwrap(), None);
    d.insert(7, 72).unwrap();
    assert_eq!(d.lookup(7).unwrap(), Some(72));
}

#[test]
fn survives_batch_and_node_boundaries() {
    let mut d = small(1 << 14, 3);
    for k in 0..10_000u64 {
        d.insert(k * 31 + 5, k).unwrap();
    }
    for k in (0..10_000u64).step_by(7) {
        assert_eq!(d.lookup(k * 31 + 5).unwrap(), Some(k));
    }
    assert!(d.check_invariants().unwrap().is_empty());
}

#[test]
fn root_distributes_once_at_capacity() {
    let mut d = Dictionary::new(DictParams {
        seed: 4,
        ..DictParams::default()
    })
    .unwrap();
    let m_keys = d.derived().m_keys;
    let per_batch = d.derived().pairs_per_page;
    let mut inserted = 0u64;
    while d.stats().tree.distributions == 0 {
        d.insert(inserted * 0x9E37_79B9 + 1, inserted).unwrap();
        inserted += 1;
    }
    assert_eq!(inserted as usize, m_keys.div_ceil(per_batch) * per_batch);
    assert_eq!(d.stats().tree.distributions, 1);
    assert_eq!(d.root_children_lens().iter().sum::<usize>(), m_keys);
    assert_eq!(d.root_len(), inserted as usize - m_keys);
    assert!(d.check_invariants().unwrap().is_empty());
}

#[test]
fn half_n_deletes_trigger_one_rebuild() {
    let n = 1u64 << 12;
    let mut d = small(n, 5);
    for k in 0..3000u64 {
        d.insert(k, k + 1).unwrap();
    }
    for k in 0..n / 2 {
        d.delete(k).unwrap();
    }
    let s = d.stats();
    assert_eq!(s.rebuilds, 1);
    assert_eq!(s.deletions_since_rebuild, 0);
    assert_eq!(s.log_len, 3000 - n / 2);
    for k in (0..3000u64).step_by(13) {
        let want = if k < n / 2 { None } else { Some(k + 1) };
        assert_eq!(d.lookup(k).unwrap(), want);
    }
}

#[test]
fn rebuild_of_empty_dictionary() {
    let mut d = small(1 << 12, 6);
    d.rebuild().unwrap();
    assert_eq!(d.log_len(), 0);
    assert_eq!(d.lookup(1).unwrap(), None);
}

#[test]
fn too_many_live_keys_is_full() {
    let n = 1u64 << 12;
    let mut d = small(n, 7);
    let err = (0..4 * n).try_for_each(|k| d.insert(k, k)).unwrap_err();
    assert!(matches!(err, Error::Full { .. }), "{err}");
}

#[test]
fn mixed_ops_match_oracle() {
    let spec = WorkloadSpec {
        n_max: 1 << 14,
        ops: 100_000,
        seed: 8,
        ..WorkloadSpec::default()
    };
    let mut d = Dictionary::new(spec.dict_params()).unwrap();
    let mut o = OracleMap::new();
    for (i, op) in spec.ops().enumerate() {
        match op {
            Op::Insert(k, v) => {
                d.insert(k, v).unwrap();
                o.insert(k, v);
            }
            Op::Delete(k) => {
                d.delete(k).unwrap();
                o.delete(k);
            }
            Op::Lookup(k) => assert_eq!(d.lookup(k).unwrap(), o.lookup(k), "op {i}"),
        }
    }
    assert!(d.stats().rebuilds >= 1);
    assert!(d.check_invariants().unwrap().is_empty());
}

#[test]
fn lookups_never_write() {
    let spec = WorkloadSpec {
        n_max: 1 << 14,
        ops: 20_000,
        mix: Mix::new(100, 0, 0).unwrap(),
        keys: KeyDist::Uniform64,
        seed: 9,
        ..WorkloadSpec::default()
    };
    let mut d = Dictionary::new(spec.dict_params()).unwrap();
    let keys: Vec<u64> = spec.ops().map(|op| op.key()).collect();
    for (i, &k) in keys.iter().enumerate() {
        d.insert(k, i as u64).unwrap();
    }
    let writes = d.io_stats().writes;
    for &k in keys.iter().step_by(3) {
        assert!(d.lookup(k).unwrap().is_some());
        assert!(d.lookup(!k).unwrap().is_none());
    }
    assert_eq!(d.io_stats().writes, writes);
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dict.pages");
    let mut d = small(1 << 14, 10);
    let mut o = OracleMap::new();
    for k in 0..5000u64 {
        d.insert(k * 3, k).unwrap();
        o.insert(k * 3, k);
        if k % 5 == 0 {
            d.delete(k * 3).unwrap();
            o.delete(k * 3);
        }
    }
    d.save(&path).unwrap();
    let back = Dictionary::load(&path).unwrap();
    for k in 0..5000u64 {
        assert_eq!(back.lookup(k * 3).unwrap(), o.lookup(k * 3));
    }
    assert!(back.check_invariants().unwrap().is_empty());
}

#[test]
fn load_rejects_missing_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("none.pages");
    assert!(Dictionary::load(&path).is_err());
}
