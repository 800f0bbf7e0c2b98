import numpy as np
import pytest

from grasorw import engine as en
from grasorw import transitions as tm
from grasorw.graph_store import build_custom, build_sequential
from grasorw.loader_model import LoaderModel, BlockCostModel
from grasorw.oracle import oracle_run
from grasorw.sinks import trajectories_bytes
from grasorw.tasks import RWNV, DeepWalkGen, config_for, run_task, starts_of
from grasorw.walk_codec import decode_batch
from grasorw.walk_manager import pool_law


def test_route_examples():
    t, bucket, kind = en.route_targets([1], [0], b=1, i=3)
    assert t.tolist() == [0] and not bucket[0]
    t, bucket, kind = en.route_targets([1], [6], b=1, i=4)
    assert t.tolist() == [6] and bucket[0] and kind[0] == en.ROUTE_EXTEND
    t, bucket, kind = en.route_targets([4], [6], b=1, i=4)
    assert t.tolist() == [4] and not bucket[0]
    t, bucket, _ = en.route_targets([1, 4], [3, 3], b=1, i=4)
    assert t.tolist() == [1, 3] and not bucket.any()
    t, _, _ = en.route_targets([4], [2], b=1, i=4, law="current")
    assert t.tolist() == [2]


def test_route_agrees_with_min_law():
    rng = np.random.default_rng(0)
    for _ in range(200):
        b, i = sorted(rng.choice(10, 2, replace=False))
        pb = rng.choice([b, i], 20)
        cb = rng.integers(0, 10, 20)
        cb = np.where((cb == b) | (cb == i), (i + 1) % 10, cb)
        ok = (cb != b) & (cb != i)
        t, bucket, _ = en.route_targets(pb[ok], cb[ok], b, i)
        assert np.array_equal(t[~bucket], np.minimum(pb[ok], cb[ok])[~bucket])
        assert np.all(cb[ok][bucket] > i)


def test_scheduler_examples():
    counts = np.array([5, 0, 7, 0])
    hops = np.array([3, 2**62, 1, 2**62])
    assert en.next_current_block("iteration", counts, hops, 0, 3) == 2
    assert en.next_current_block("alphabet", counts, hops, 0, 3) == 1
    assert en.next_current_block("maxsum", counts, hops, 0, 3) == 2
    assert en.next_current_block("minheight", counts, hops, 0, 3) == 2
    assert en.next_current_block("iteration", counts, hops, 2, 3) == 0
    assert en.next_current_block("iteration", np.zeros(4), hops, 0, 3) is None
    rng = np.random.default_rng(0)
    assert en.next_current_block("gwmix", counts, hops, None, 3, rng) == 2


def test_single_block_finishes_in_init(tmp_path):
    g = build_sequential([0, 1, 2], [1, 2, 0], tmp_path / "s", block_size=1 << 20)
    task = DeepWalkGen(10, 80)
    for mode in (en.TRIANGULAR, en.PLAIN_BUCKET):
        m, sink = run_task(g, task, config_for(task, engine_mode=mode))
        assert m.ancillary_loads == 0 and m.time_slots == 0 and m.init_loads == 1
        walks = sink.walks()
        assert len(walks) == 30 and all(len(w) == 80 for _, w in walks)


def test_init_persists_only_cross_block(er_factory, tmp_path):
    g = er_factory(1000, 6, 5)
    eng = en.Engine(g, config_for(RWNV(1, 80, 2, 0.5), seed=3), workdir=tmp_path / "w")
    src, widx = eng._expand_starts(starts_of(RWNV(1, 80), g.degrees()))
    eng.metrics.walks_started = len(src)
    eng.initialize_walks(src, widx)
    assert len(eng.pools) > 0
    for k, recs in enumerate(eng.pools.scan_all()):
        f = decode_batch(recs)
        assert np.all(f.pre_block != f.cur_block)
        assert np.all(np.minimum(f.pre_block, f.cur_block) == k)
    # a walk whose first step leaves the source block is stored with hop 1
    f = decode_batch(np.concatenate(eng.pools.scan_all()))
    first = f.hop == 1
    assert np.all(f.pre_block[first] == g.blocks_of(f.source[first]))


def test_walk_in_one_block_never_persisted(tmp_path):
    # two disconnected triangles in separate blocks
    g = build_custom([0, 1, 2, 3, 4, 5], [1, 2, 0, 4, 5, 3], [0, 0, 0, 1, 1, 1], tmp_path / "s")
    m, sink = run_task(g, RWNV(2, 80, 4, 0.25))
    assert m.walk_io_bytes == 0 and m.time_slots == 0
    assert len(sink.walks()) == 12


def test_ping_pong_between_two_blocks(tmp_path):
    # bipartite: every step switches block; one slot pairs the two blocks
    src = [0, 0, 1, 1, 2, 2]
    dst = [3, 4, 3, 5, 4, 5]
    g = build_custom(src, dst, [0, 0, 0, 1, 1, 1], tmp_path / "s")
    task = RWNV(1, 40, 1, 1)
    m, sink = run_task(g, task, config_for(task, seed=1, deterministic=True))
    assert m.time_slots == 1 and m.ancillary_loads == 1
    walks = sink.walks()
    assert all(len(w) == 40 for _, w in walks)


def test_exit_after_one_step():
    offsets = np.array([0, 1, 2])
    nbrs = np.array([1, 0])

    class Half:
        def contains(self, vs):
            return vs == 0

        def resolve(self, vs):
            return offsets[vs], np.diff(offsets)[vs]

        def gather(self, pos):
            return nbrs[pos]

    st = en.Stepper(None, tm.FixedLength(80), 0, True, record=False)
    adv = st.advance(Half(), np.array([0]), np.array([0]), np.array([-1]), np.array([0]),
                     np.array([0]))
    assert adv.exited.tolist() == [True] and adv.hop.tolist() == [1] and adv.steps == 1


@pytest.mark.parametrize("mode", [en.TRIANGULAR, en.PLAIN_BUCKET])
def test_engine_matches_oracle_and_orders_ancillaries(er_factory, mode):
    g = er_factory(1500, 6, 6, seed=2)
    task = RWNV(1, 30, 2.0, 0.5)
    offsets, nbrs = g.read_all()
    ref = trajectories_bytes(oracle_run(offsets, nbrs, task, seed=5))
    m, sink = run_task(g, task, config_for(task, engine_mode=mode, seed=5, deterministic=True))
    assert trajectories_bytes(sink.walks()) == ref
    by_slot = {}
    for u in m.io_utilization:
        by_slot.setdefault(u["slot"], []).append((u["current"], u["block"]))
    for loads in by_slot.values():
        blocks = [i for _, i in loads]
        assert blocks == sorted(set(blocks))
        if mode == en.TRIANGULAR:
            assert all(i > b for b, i in loads)
    if mode == en.TRIANGULAR:
        assert m.routing.get(en.ROUTE_EXTEND, 0) > 0
    assert m.walks_finished == m.walks_started


def test_plain_bucket_pools_keyed_by_current(er_factory):
    g = er_factory(800, 6, 4, seed=1)
    bad = []

    def scan(engine, b):
        for k, recs in enumerate(engine.pools.scan_all()):
            bad.append(int(np.sum(pool_law(recs, "current") != k)))

    task = RWNV(1, 20, 1, 1)
    run_task(g, task, config_for(task, engine_mode=en.PLAIN_BUCKET), slot_callback=scan)
    assert bad and sum(bad) == 0


def test_nondeterministic_iteration_and_alphabet_agree(er_factory):
    g = er_factory(600, 5, 4, seed=4)
    task = RWNV(3, 25, 0.5, 2.0)
    outs = []
    for sch in ("iteration", "alphabet"):
        _, sink = run_task(g, task, config_for(task, scheduler=sch, seed=9))
        outs.append(trajectories_bytes(sink.walks()))
    assert outs[0] == outs[1]
    _, sink = run_task(g, task, config_for(task, seed=10))
    assert trajectories_bytes(sink.walks()) != outs[0]


def test_multiple_walks_per_source_are_complete(er_factory):
    g = er_factory(300, 4, 3, seed=6)
    task = RWNV(4, 15, 1, 1)
    _, sink = run_task(g, task, config_for(task, seed=2))
    walks = sink.walks()
    offsets, nbrs = g.read_all()
    assert len(walks) == 4 * int(np.sum(g.degrees() > 0))
    for s, w in walks:
        assert w[0] == s and len(w) == 15
        for a, b in zip(w[:-1], w[1:]):
            assert b in nbrs[offsets[a]: offsets[a + 1]]


def test_config_errors(er_factory):
    g = er_factory(100, 4, 2)
    with pytest.raises(ValueError):
        en.EngineConfig(scheduler="random")
    with pytest.raises(ValueError):
        en.Engine(g, en.EngineConfig(loading_mode="learned"))
    with pytest.raises(ValueError):
        run_task(g, RWNV(2, 10), config_for(RWNV(2, 10), deterministic=True))


def test_learned_mode_uses_model(er_factory):
    g = er_factory(1000, 6, 4, seed=8)
    model = LoaderModel()
    model.global_model = BlockCostModel(1.0, 0.05, 2.0)  # eta0 = 0.05
    task = RWNV(1, 20, 1, 1)
    m, _ = run_task(g, task, config_for(task, loading_mode="learned"), loader=model)
    modes = {u["mode"] for u in m.io_utilization}
    assert modes == {"full", "ondemand"}
    for u in m.io_utilization:
        eta = u["walks"] / g.block_span(u["block"])
        assert u["mode"] == ("full" if eta > 0.05 else "ondemand")


def test_empty_start_set(er_factory):
    g = er_factory(100, 4, 2)
    m = en.Engine(g, en.EngineConfig()).run((np.zeros(0, int), np.zeros(0, int)))
    assert m.walks_started == 0 and m.block_loads == 0
