"""Smoke test for the pyemdict extension module."""

import os
import random
import tempfile

import pyemdict


def main():
    rng = random.Random(7)
    d = pyemdict.Dictionary(n_max=1 << 14, seed=3)
    base = pyemdict.BaselineBufferTree(fanout=8)
    truth = {}
    for i in range(20000):
        k = rng.randrange(1 << 14)
        r = rng.random()
        if r < 0.5:
            d.insert(k, i)
            base.insert(k, i)
            truth[k] = i
        elif r < 0.6:
            d.delete(k)
            base.delete(k)
            truth.pop(k, None)
        else:
            want = truth.get(k)
            assert d.lookup(k) == want, (i, k)
            assert base.lookup(k) == want, (i, k)
    assert d.check_invariants() == []
    reads, writes = d.io_stats()
    assert reads > 0 and writes > 0
    stats = d.stats()
    assert stats["inserts"] > 0 and stats["live_pages"] == d.live_pages()

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "dict.pages")
        d.save(path)
        back = pyemdict.Dictionary.load(path)
        for k, v in list(truth.items())[:2000]:
            assert back.lookup(k) == v

    assert pyemdict.t_min_for_lambda(16) == 8
    tu, tq = pyemdict.predict_costs(1 << 18, 64, 1 << 16, 16)
    assert tu > 0 and abs(tq - 4.5) < 1e-9
    assert pyemdict.verify(n=1 << 14, ops=20000, seed=2) is None
    csv = pyemdict.sweep([8, 16], n=1 << 14, ops=10000)
    lines = csv.strip().splitlines()
    assert lines[0].startswith("structure,n,B,M,lambda")
    assert len(lines) == 5

    try:
        pyemdict.Dictionary(lam=1000)
    except ValueError:
        pass
    else:
        raise AssertionError("lambda out of range accepted")
    print("pyemdict smoke test passed")


if __name__ == "__main__":
    main()
