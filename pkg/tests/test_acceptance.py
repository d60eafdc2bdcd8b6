"""Acceptance criteria 1-10, each at its stated tolerance.

Every test prints one ``[PASS]``/``[FAIL]`` line, and the lines are repeated
in the pytest terminal summary. Run standalone with
``python tests/test_acceptance.py`` or as part of ``pytest``.
"""
from __future__ import annotations

import json
import time

import numpy as np
import pytest

from mnemos.embedding import HashingEmbedder
from mnemos.harness import ExperimentConfig, make_arm_session, run_experiment
from mnemos.memory_store import MemoryStore
from mnemos.metrics import accuracy, ccs, ptr
from mnemos.policy import LRU, PolicyKind, manage_memory, relevance_score, select_victim
from mnemos.session_engine import Session, SessionConfig, Transcript, Turn
from mnemos.twentyq_env import (
    MAX_TURNS,
    RandomGuesser,
    ScriptedGuesser,
    SessionContext,
    SplitMix64,
    question_for,
    run_match,
)

from oracles import best_slot, kappa, relevance_victim

WORDS = ("apple river stone cloud violin hammer tiger tulip engine orbit "
         "copper lantern meadow falcon pepper canvas").split()


def _random_vectors(rng, n, dim):
    """Random vectors with deliberate exact ties: duplicates and zero vectors."""
    vecs = []
    for _ in range(n):
        u = rng.random()
        if vecs and u < 0.15:
            vecs.append(vecs[int(rng.integers(len(vecs)))].copy())
        elif u < 0.2:
            vecs.append(np.zeros(dim))
        else:
            vecs.append(rng.normal(size=dim))
    return vecs


# -- 1 ---------------------------------------------------------------------------


def test_c01_retrieval_oracle(criterion):
    with criterion(1, "retrieval == exhaustive scan on 1,000 stores, |score diff| <= 1e-12, < 5 s") as note:
        rng = np.random.default_rng(1)
        elapsed = 0.0
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(1, 65))
            store = MemoryStore(dimension=256, capacity=64)
            for i, v in enumerate(_random_vectors(rng, n, 256)):
                store.insert(f"s{i}", v)
            query = store.get(int(rng.integers(n))).vector.copy() if rng.random() < 0.2 else rng.normal(size=256)
            expected_id, expected_score = best_slot(store.slots, query)
            t0 = time.perf_counter()
            got = store.retrieve(query)
            elapsed += time.perf_counter() - t0
            assert got.slot_id == expected_id
            worst = max(worst, abs(got.score - expected_score))
            assert abs(got.score - expected_score) <= 1e-12
        note(f"max |diff| {worst:.1e}; retrieve time {elapsed:.2f}s")
        assert elapsed < 5.0


# -- 2 ---------------------------------------------------------------------------


def test_c02_kappa_oracle(criterion):
    with criterion(2, "kappa == double loop (1e-12) and victim == brute argmin on 1,000 instances") as note:
        rng = np.random.default_rng(2)
        worst = 0.0
        ties_seen = 0
        for _ in range(1000):
            window = int(rng.integers(1, 9))
            n = int(rng.integers(2, 25))
            store = MemoryStore(dimension=64, capacity=n - 1, window=window)
            vecs = _random_vectors(rng, n, 64)
            for i, v in enumerate(vecs):
                store.insert(f"s{i}", v)
                if rng.random() < 0.6:
                    q = vecs[int(rng.integers(i + 1))] if rng.random() < 0.2 else rng.normal(size=64)
                    store.record_query(q)
                if rng.random() < 0.5:
                    store.tick()
            for sid in rng.choice([s.id for s in store], size=min(3, n), replace=False):
                store.touch(int(sid))
            queries = [q for _, q in store.recent_queries]
            assert len(queries) <= window <= 8
            kappas = {}
            for slot in store:
                expected = kappa(slot, queries)
                diff = abs(relevance_score(store, slot) - expected)
                worst = max(worst, diff)
                assert diff <= 1e-12
                kappas[slot.id] = expected
            ties_seen += len(kappas) - len(set(kappas.values()))
            protected = int(rng.integers(n)) if rng.random() < 0.7 else None
            got = select_victim(store, PolicyKind("relevance", window), protected)
            assert got.victim_id == relevance_victim(store.slots, queries, protected)
        note(f"max |diff| {worst:.1e}; {ties_seen} tied kappas exercised")
        assert ties_seen > 0


# -- 3 ---------------------------------------------------------------------------


def test_c03_lru_correctness(criterion):
    with criterion(3, "LRU over 10,000 random ops evicts a least-recent slot, never the protected one") as note:
        rng = np.random.default_rng(3)
        store = MemoryStore(dimension=8, capacity=8, window=4)
        evictions = 0
        for _ in range(10_000):
            op = rng.random()
            if op < 0.45:
                new = store.insert("x", rng.normal(size=8))
                for decision in manage_memory(store, LRU, protected_id=new):
                    evictions += 1
                    assert decision.victim_id != new
                    assert new in store
                    survivors = [s.last_access for s in store if s.id != new]
                    assert all(decision.score <= z for z in survivors)
                assert len(store) <= store.capacity
            elif op < 0.75 and len(store):
                ids = [s.id for s in store]
                store.touch(ids[int(rng.integers(len(ids)))])
            else:
                store.tick()
        note(f"{evictions} evictions checked")
        assert evictions > 1000


# -- 4 ---------------------------------------------------------------------------


def _sentences(rng, n):
    return [" ".join(rng.choice(WORDS, size=int(rng.integers(2, 7)))) for _ in range(n)]


def test_c04_capacity_invariant(criterion):
    with criterion(4, "|slots| <= N under lru/relevance, = turns under none, 100-turn sessions") as note:
        rng = np.random.default_rng(4)
        sessions = 0
        for capacity in (1, 8, 64):
            queries = _sentences(rng, 100)
            for name in ("none", "lru", "relevance"):
                s = Session(SessionConfig(capacity=capacity, policy=PolicyKind.parse(name, 8)))
                for turn, q in enumerate(queries, 1):
                    s.run_turn(q)
                    if name == "none":
                        assert len(s.store) == turn
                    else:
                        assert len(s.store) <= capacity
                        assert len(s.store) == min(turn, capacity)
                sessions += 1
        note(f"{sessions} sessions x 100 turns")


# -- 5 ---------------------------------------------------------------------------


class _Scaled:
    """Wraps an embedder and multiplies every embedding by a constant."""

    def __init__(self, inner, factor):
        self.inner, self.factor = inner, factor
        self.dimension = inner.dimension

    def embed(self, text):
        return self.inner.embed(text) * self.factor

    def embed_interaction(self, query, response):
        return self.inner.embed_interaction(query, response) * self.factor


def _random_transcript(rng, queries, sid):
    turns = [Turn(i + 1, q, " ".join(rng.choice(WORDS, size=int(rng.integers(1, 6)))))
             for i, q in enumerate(queries)]
    return Transcript(sid, "fp", turns)


def test_c05_metric_bounds_and_identities(criterion):
    with criterion(5, "CCS in [-1,1], ptr(X,X)=0, ptr(A,B)+ptr(B,A)<=100, CCS scale-invariant (1e-9)") as note:
        rng = np.random.default_rng(5)
        emb, scaled = HashingEmbedder(), _Scaled(HashingEmbedder(), 3.0)
        worst_sum, worst_scale = 0.0, 0.0
        for _ in range(100):
            queries = _sentences(rng, int(rng.integers(1, 30)))
            a = _random_transcript(rng, queries, "a")
            b = _random_transcript(rng, queries, "b")
            for t in (a, b):
                c = ccs(t, emb)
                assert -1.0 <= c <= 1.0
                diff = abs(c - ccs(t, scaled))
                worst_scale = max(worst_scale, diff)
                assert diff <= 1e-9
            assert ptr(a, a, emb) == 0.0
            total = ptr(a, b, emb) + ptr(b, a, emb)
            worst_sum = max(worst_sum, total)
            assert total <= 100.0
        note(f"max ptr sum {worst_sum:.1f}; max scale diff {worst_scale:.1e}")


# -- 6 ---------------------------------------------------------------------------


def test_c06_table1_analog(criterion, tmp_path):
    with criterion(6, "memory(relevance,N=64,T=8) beats rolling-window(1) by >= 10 pp over 200 seeds, < 60 s") as note:
        cfg = ExperimentConfig(seeds=tuple(range(200)), arms=("baseline-rolling-1", "memory-relevance"),
                               capacity=64, window=8, policy="relevance", output_dir=str(tmp_path),
                               parallelism=1)
        t0 = time.perf_counter()
        run_experiment(cfg)
        elapsed = time.perf_counter() - t0
        base = json.loads((tmp_path / "baseline-rolling-1.report.json").read_text())["accuracy_percent"]
        mem = json.loads((tmp_path / "memory-relevance.report.json").read_text())["accuracy_percent"]
        note(f"memory {mem:.1f}% vs baseline {base:.1f}%")
        assert mem > base
        assert mem - base >= 10.0
        assert elapsed < 60.0


# -- 7 ---------------------------------------------------------------------------


def _tracked_arm(cfg, arm, corpus):
    session, lookback = make_arm_session(cfg, arm)
    sizes = []
    run_turn = session.run_turn

    def tracked(query):
        turn = run_turn(query)
        sizes.append(len(session.store))
        return turn

    session.run_turn = tracked
    provider = SessionContext(session, lookback=lookback)
    guesser = ScriptedGuesser(corpus)
    outcomes = [run_match(corpus, s, guesser, context_provider=provider) for s in cfg.seeds]
    peak = max(t.store_bytes for t in session.transcript.turns)
    return sizes, peak, accuracy(outcomes)


def test_c07_table3_analog(criterion, corpus):
    with criterion(7, "peak(none) > peak(lru), peak(relevance); both plateau at N slots; acc(relevance) >= acc(lru)") as note:
        cfg = ExperimentConfig(seeds=tuple(range(200)), capacity=64, window=8)
        n = cfg.capacity
        results = {p: _tracked_arm(cfg, f"memory-{p}", corpus) for p in ("none", "lru", "relevance")}
        sizes_none, peak_none, _ = results["none"]
        assert sizes_none == list(range(1, len(sizes_none) + 1))
        for policy in ("lru", "relevance"):
            sizes, peak, _ = results[policy]
            assert len(sizes) > n
            assert sizes == [min(i, n) for i in range(1, len(sizes) + 1)]
            assert peak_none > peak
        acc_lru, acc_rel = results["lru"][2], results["relevance"][2]
        note(f"peaks none={peak_none} lru={results['lru'][1]} relevance={results['relevance'][1]}; "
             f"acc lru={acc_lru:.1f}% relevance={acc_rel:.1f}%")
        assert acc_rel >= acc_lru


# -- 8 ---------------------------------------------------------------------------


def _non_latency(out_dir):
    """Every output file with latency fields removed, keyed by file name."""
    files = {}
    for path in sorted(out_dir.iterdir()):
        if path.name == "manifest.json":
            m = json.loads(path.read_text())
            files[path.name] = (m["fingerprint"], m["engine_version"], m["status"], sorted(m["files"]))
        elif path.suffix == ".jsonl":
            rows = []
            for line in path.read_text(encoding="utf-8").splitlines():
                row = json.loads(line)
                row.pop("latency_ms", None)
                rows.append(json.dumps(row, sort_keys=True))
            files[path.name] = rows
        elif path.name.endswith(".report.json"):
            rep = json.loads(path.read_text())
            rep.pop("mean_latency_ms")
            files[path.name] = rep
        else:  # comparison table: drop the latency column
            files[path.name] = [line.rsplit("|", 1)[0] for line in path.read_text().splitlines()]
    return files


def test_c08_determinism(criterion, tmp_path):
    with criterion(8, "rerun reproduces all non-latency outputs bit-for-bit") as note:
        arms = ("baseline-rolling-1", "memory-none", "memory-lru", "memory-relevance")
        outs = []
        for name, workers in (("a", 1), ("b", 2)):
            cfg = ExperimentConfig(seeds=tuple(range(60)), arms=arms, output_dir=str(tmp_path / name),
                                   parallelism=workers)
            run_experiment(cfg)
            outs.append(_non_latency(tmp_path / name))
        assert outs[0].keys() == outs[1].keys()
        for key in outs[0]:
            assert outs[0][key] == outs[1][key], key
        matches = [(tmp_path / n / "memory-relevance.matches.jsonl").read_bytes() for n in "ab"]
        assert matches[0] == matches[1]
        note(f"{len(outs[0])} files compared, serial vs 2 workers")


# -- 9 ---------------------------------------------------------------------------


class _QuestionsOnly:
    """Random agent that never guesses; half its questions are gibberish."""

    def __init__(self, corpus, seed):
        self.corpus, self.rng = corpus, SplitMix64(seed)

    def __call__(self, view):
        if self.rng.below(2):
            return f"could it be {self.rng.next():x}?", None
        return question_for(self.rng.choice(self.corpus.vocabulary)), None


def test_c09_termination(criterion, corpus):
    with criterion(9, "10,000 random-agent matches end within 20 turns with a definite outcome, < 30 s") as note:
        t0 = time.perf_counter()
        guessing = RandomGuesser(corpus, seed=9)
        silent = _QuestionsOnly(corpus, seed=9)
        wins = 0
        for seed in range(10_000):
            agent = guessing if seed % 2 else silent
            out = run_match(corpus, seed, agent)
            assert 1 <= out.turns_used <= MAX_TURNS
            assert out.diagnostic is None
            if out.success:
                wins += 1
                assert out.records[-1].correct
            else:
                assert out.turns_used == MAX_TURNS
                assert not any(r.correct for r in out.records)
        elapsed = time.perf_counter() - t0
        note(f"{wins} wins")
        assert elapsed < 30.0


# -- 10 --------------------------------------------------------------------------


def _odd_text(rng):
    pieces = ["plain", "\u001f", "quote\"", "back\\slash", "new\nline", "été", "\U0001f600", "\t", ""]
    return "".join(rng.choice(pieces, size=int(rng.integers(0, 6))))


def test_c10_snapshot_round_trip(criterion):
    with criterion(10, "dump -> load -> dump is byte-identical") as note:
        rng = np.random.default_rng(10)
        stores = []
        for _ in range(300):
            dim = int(rng.integers(2, 40))
            store = MemoryStore(dimension=dim, capacity=int(rng.integers(1, 20)), window=int(rng.integers(1, 9)))
            for _ in range(int(rng.integers(0, 30))):
                u = rng.random()
                if u < 0.4:
                    v = rng.normal(size=dim) * 10.0 ** rng.integers(-300, 300)
                    v[rng.random(dim) < 0.2] = -0.0
                    store.insert(_odd_text(rng), v)
                elif u < 0.6:
                    store.record_query(rng.normal(size=dim))
                elif u < 0.75 and len(store):
                    store.remove(store.slots[int(rng.integers(len(store)))].id)
                elif u < 0.85 and len(store):
                    store.touch(store.slots[int(rng.integers(len(store)))].id)
                else:
                    store.tick()
            stores.append(store)
        s = Session(SessionConfig(capacity=8, policy=PolicyKind("relevance", 3)))
        for q in _sentences(rng, 50):
            s.run_turn(q)
        stores.append(s.store)
        stores.append(MemoryStore())
        for store in stores:
            first = store.dumps()
            second = MemoryStore.loads(first).dumps()
            assert first == second
            assert store.nbytes == len(first)
        note(f"{len(stores)} stores")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
