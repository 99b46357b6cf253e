mod common;

use common::*;
use emdict::gadget::{Gadget, GadgetElement, QueryStats};
use emdict::hashing::HashedKey;
use emdict::Error;
use proptest::prelude::*;

#[test]
fn empty_gadget_is_inert() {
    let mem = memory();
    let g = Gadget::new(params(256, 4, 20)).unwrap();
    assert!(g.query(&mem, HashedKey::new(1, 2, 3)).is_empty());
    assert_eq!(mem.io_stats().total(), 0);
    let s = g.stats();
    assert_eq!((s.elements, s.pages, s.little_flushes(), s.big_flushes()), (0, 0, 0, 0));
    assert_eq!(mem.page_count(), 0);
}

#[test]
fn small_insert_stays_in_tail() {
    let p = params(256, 4, 20);
    let mut f = Filled::new(p.clone(), 1);
    f.insert_random(p.elems_per_block - 1);
    let io = f.mem.io_stats();
    assert_eq!(io.reads, 0);
    assert_eq!(io.writes, 1);
    let s = f.g.stats();
    assert_eq!(s.little_flushes(), 0);
    assert_eq!(s.levels.len(), 1);
}

#[test]
fn one_block_is_one_little_flush() {
    let p = params(256, 4, 20);
    let mut f = Filled::new(p.clone(), 2);
    f.insert_random(p.elems_per_block);
    let g = f.g.as_recursive().unwrap();
    assert_eq!(g.stats().little_flushes(), 1);
    assert_eq!(g.top_len(), p.elems_per_block);
    assert_eq!(g.top().unwrap().len(), p.elems_per_block);
}

#[test]
fn big_flush_at_exact_top_capacity() {
    let p = params(16, 4, 20);
    let mut f = Filled::new(p.clone(), 3);
    let until = p.top_capacity.div_ceil(p.elems_per_block) * p.elems_per_block;
    f.fill_to(until - 1, 50);
    assert_eq!(f.g.stats().big_flushes(), 0);
    f.fill_to(until, 50);
    let g = f.g.as_recursive().unwrap();
    assert_eq!(g.stats().big_flushes(), 1);
    let moved: usize = g.bottom_lens().iter().sum();
    assert_eq!(moved, p.top_capacity);
    // The block that crossed the threshold is split between top and bottoms.
    assert_eq!(g.top_len(), until - p.top_capacity);
    assert!(f.g.check_invariant(&f.mem).is_ok());
}

#[test]
fn flush_counts_follow_arithmetic() {
    for (t, seed) in [(16u64, 4u64), (256, 5)] {
        let p = params(t, 4, 20);
        let mut f = Filled::new(p.clone(), seed);
        f.fill_to(3 * p.top_capacity + 17, 300);
        let n = f.log.len();
        let s = f.g.stats();
        let little = (n / p.elems_per_block) as u64;
        assert_eq!(s.little_flushes(), little);
        assert_eq!(
            s.big_flushes(),
            little * p.elems_per_block as u64 / p.top_capacity as u64
        );
    }
}

#[test]
fn duplicate_key_returns_both_backpointers() {
    let p = params(16, 4, 20);
    let mut mem = memory();
    let mut g = Gadget::new(p.clone()).unwrap();
    let k = HashedKey::new(77, 9, 5);
    g.bulk_insert(&mut mem, &[GadgetElement::new(k, 3)]).unwrap();
    let filler: Vec<_> = (0..2 * p.top_capacity as u64)
        .map(|i| GadgetElement::new(HashedKey::new((i % 4000) as u32 + 90, (i % 16) as u32, 0), 10 + i))
        .collect();
    g.bulk_insert(&mut mem, &filler).unwrap();
    g.bulk_insert(&mut mem, &[GadgetElement::new(k, 900_000)]).unwrap();
    assert_eq!(g.query(&mem, k), vec![3, 900_000]);
    let mut miss = k;
    miss.shadow ^= 1;
    assert!(g.query(&mem, miss).is_empty());
}

#[test]
fn query_matches_log_scan() {
    for (t, seed) in [(16u64, 10u64), (256, 11)] {
        let p = params(t, 4, 20);
        let mut f = Filled::new(p.clone(), seed);
        f.fill_to(p.capacity / 8, 200);
        let oracle = f.oracle();
        for _ in 0..2000 {
            let k = f.query_key();
            let want = oracle.get(&k).cloned().unwrap_or_default();
            assert_eq!(f.g.query(&f.mem, k), want, "t={t} key={k:?}");
        }
    }
}

#[test]
fn query_visits_follow_recursion() {
    for (t, visits) in [(4u64, 1u64), (16, 3), (256, 7)] {
        let p = params(t, 4, 20);
        assert_eq!(p.query_visits(), visits);
        let mut f = Filled::new(p.clone(), t);
        f.fill_to(p.top_capacity.max(4096) + 1000, 500);
        for _ in 0..50 {
            let k = f.query_key();
            let mut qs = QueryStats::default();
            f.g.query_with_stats(&f.mem, k, &mut qs);
            assert_eq!(qs.visits, visits);
            assert_eq!(qs.dist_violations, 0);
        }
    }
}

#[test]
fn invariant_holds_throughout_fill() {
    let p = params(16, 4, 20);
    let mut f = Filled::new(p.clone(), 12);
    for _ in 0..40 {
        f.fill_to(f.log.len() + 1500, 64);
        let rep = f.g.check_invariant(&f.mem);
        assert!(rep.is_ok(), "{:?}", rep.messages);
        assert_eq!(rep.tail + rep.top + rep.bottom, f.log.len() as u64);
    }
}

#[test]
fn invariant_sweep_detects_corruption() {
    let p = params(16, 4, 20);
    let mut f = Filled::new(p.clone(), 13);
    f.fill_to(p.top_capacity + 3000, 100);
    let pid = f.g.as_recursive().unwrap().log_pages()[0];
    f.mem.tamper(pid).unwrap()[0] ^= 0xFFFF_0000;
    assert!(!f.g.check_invariant(&f.mem).is_ok());
}

#[test]
fn overflow_signals_rebuild() {
    let p = params(4, 4, 20);
    let mut mem = memory();
    let mut g = Gadget::new(p.clone()).unwrap();
    let elems = vec![GadgetElement::new(HashedKey::new(1, 1, 1), 0); p.capacity + 1];
    assert!(matches!(
        g.bulk_insert(&mut mem, &elems),
        Err(Error::NeedsRebuild { .. })
    ));
}

#[test]
fn out_of_range_element_rejected() {
    let p = params(16, 4, 20);
    let mut mem = memory();
    let mut g = Gadget::new(p).unwrap();
    let bad = GadgetElement::new(HashedKey::new(0, 16, 0), 0);
    assert!(matches!(g.bulk_insert(&mut mem, &[bad]), Err(Error::BadParameters(_))));
    let bad = GadgetElement::new(HashedKey::new(0, 0, 0), 1 << 20);
    assert!(g.bulk_insert(&mut mem, &[bad]).is_err());
}

#[test]
fn base_single_insert_uses_buffer() {
    let p = params(4, 4, 20);
    let mut mem = memory();
    let mut g = Gadget::new(p).unwrap();
    let e = GadgetElement::new(HashedKey::new(5, 1, 2), 9);
    g.bulk_insert(&mut mem, &[e]).unwrap();
    assert!(mem.io_stats().total() <= 2);
    let b = g.as_base().unwrap();
    assert_eq!(b.buffer_len(), 1);
    mem.reset_stats();
    assert_eq!(g.query(&mem, e.key), vec![9]);
    assert_eq!(mem.io_stats().reads, 1);
}

#[test]
fn base_flush_touches_distinct_buckets() {
    let p = params(4, 4, 20);
    let mut mem = memory();
    let mut g = Gadget::new(p.clone()).unwrap();
    let mut f = Filled::new(p.clone(), 14);
    f.fill_to(p.elems_per_block * 40, 30);
    // Feed a fresh gadget the same data and measure the flush that empties
    // an exactly full buffer.
    let mut fed = 0;
    let epb = p.elems_per_block;
    while fed + epb <= f.log.len() - epb {
        g.bulk_insert(&mut mem, &f.log[fed..fed + epb - 1]).unwrap();
        fed += epb - 1;
        let buckets_before = g.as_base().unwrap().bucket_count();
        let e = &f.log[fed..fed + 1];
        let before = mem.io_stats();
        g.bulk_insert(&mut mem, e).unwrap();
        fed += 1;
        let io = mem.io_stats() - before;
        let base = g.as_base().unwrap();
        if base.bucket_count() == buckets_before {
            let distinct: std::collections::HashSet<_> = f.log[fed - epb..fed]
                .iter()
                .map(|e| e.key.page as usize & (base.bucket_count() - 1))
                .collect();
            // Buffer read, then per bucket at most one read and two writes.
            assert!(
                io.total() <= 1 + 3 * distinct.len() as u64,
                "{io:?} vs {}",
                distinct.len()
            );
        }
    }
}

#[test]
fn base_same_page_hash_retrievable() {
    let p = params(4, 4, 20);
    let mut mem = memory();
    let mut g = Gadget::new(p.clone()).unwrap();
    let a = GadgetElement::new(HashedKey::new(42, 0, 1), 1);
    let b = GadgetElement::new(HashedKey::new(42, 3, 2), 2);
    let filler: Vec<_> = (0..p.elems_per_block as u64)
        .map(|i| GadgetElement::new(HashedKey::new(i as u32 % 40, 0, 0), 100 + i))
        .collect();
    g.bulk_insert(&mut mem, &[a, b]).unwrap();
    g.bulk_insert(&mut mem, &filler).unwrap();
    assert_eq!(g.as_base().unwrap().buffer_len(), 0);
    assert_eq!(g.query(&mem, a.key), vec![1]);
    assert_eq!(g.query(&mem, b.key), vec![2]);
}

#[test]
fn base_query_reads_buffer_plus_chain() {
    let p = params(4, 4, 20);
    let mut f = Filled::new(p.clone(), 15);
    f.fill_to(p.elems_per_block * 30 + 5, 40);
    for _ in 0..200 {
        let k = f.query_key();
        let before = f.mem.io_stats();
        f.g.query(&f.mem, k);
        let pages = f.g.as_base().unwrap().query_pages(k);
        assert_eq!((f.mem.io_stats() - before).reads as usize, pages);
    }
}

#[test]
fn capacity_concentration_256() {
    let p = params(256, 4, 22);
    let mut f = Filled::new(p.clone(), 16);
    f.fill_to(p.capacity / 4, 4096);
    let g = f.g.as_recursive().unwrap();
    let lens = g.bottom_lens();
    let total: usize = lens.iter().sum();
    let share = total as f64 / lens.len() as f64;
    assert!(total > 0);
    for l in lens {
        assert!((l as f64) <= 2.0 * share, "{l} vs share {share}");
    }
}

#[test]
fn per_level_bits_within_constant_factor() {
    let p = params(256, 4, 22);
    let mut f = Filled::new(p.clone(), 17);
    f.fill_to(p.capacity / 4, 4096);
    let s = f.g.stats();
    let n = f.log.len() as f64;
    let per_key: Vec<f64> = s.levels.iter().map(|l| l.bits_written as f64 / n).collect();
    assert_eq!(per_key.len(), 3);
    let max = per_key.iter().cloned().fold(0.0, f64::max);
    let min = per_key.iter().cloned().fold(f64::MAX, f64::min);
    assert!(max / min <= 4.0, "{per_key:?}");
}

#[test]
fn page_count_bounded() {
    for (t, seed) in [(16u64, 18u64), (256, 19)] {
        let p = params(t, 4, 22);
        let mut f = Filled::new(p.clone(), seed);
        f.fill_to(p.capacity / 2, 2048);
        let bound = 4.0 * p.capacity as f64 * p.elem_bits as f64 / p.page_bits() as f64;
        let pages = f.g.stats().pages;
        assert!((pages as f64) <= bound, "t={t}: {pages} pages > {bound}");
        assert_eq!(pages as usize, f.mem.live_pages());
    }
}

#[test]
fn false_positives_below_one_per_query() {
    let p = params(256, 4, 20);
    let mut f = Filled::new(p.clone(), 20);
    f.fill_to(p.capacity / 4, 4096);
    let mut qs = QueryStats::default();
    let q = 3000;
    for _ in 0..q {
        let k = f.query_key();
        f.g.query_with_stats(&f.mem, k, &mut qs);
    }
    assert!((qs.false_positives as f64 / q as f64) <= 1.0, "{qs:?}");
    assert_eq!(qs.dist_violations, 0);
}

#[test]
fn stats_are_free_and_free_releases_everything() {
    let p = params(16, 4, 20);
    let mut f = Filled::new(p.clone(), 21);
    f.fill_to(p.top_capacity * 3, 500);
    let before = f.mem.io_stats();
    let _ = f.g.stats();
    let _ = f.g.check_invariant(&f.mem);
    assert_eq!(f.mem.io_stats(), before);
    let g = std::mem::replace(&mut f.g, Gadget::new(p).unwrap());
    g.free(&mut f.mem).unwrap();
    assert_eq!(f.mem.live_pages(), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_batches_agree_with_oracle(seed in any::<u64>(), batches in prop::collection::vec(1usize..400, 1..40)) {
        let p = params(16, 4, 20);
        let mut f = Filled::new(p, seed);
        for n in batches {
            f.insert_random(n);
        }
        let rep = f.g.check_invariant(&f.mem);
        prop_assert!(rep.is_ok(), "{:?}", rep.messages);
        let oracle = f.oracle();
        for _ in 0..100 {
            let k = f.query_key();
            let want = oracle.get(&k).cloned().unwrap_or_default();
            prop_assert_eq!(f.g.query(&f.mem, k), want);
        }
    }
}
