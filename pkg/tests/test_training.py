from __future__ import annotations

import math

import numpy as np
import pytest

from reldec.channel import (
    DOMAIN_TRAIN,
    LlrDataset,
    SnrGrid,
    generate_dataset,
    substream,
)
from reldec.clustering import make_clusters
from reldec.codes import TannerGraph, build_ab_code
from reldec.mdp import Hyperparams, QTable
from reldec.policy import PolicyCompatibilityError, dumps_policy
from reldec.training import (
    _AdaptPhase,
    _episode,
    _reference_bits,
    adapt_online,
    train_am_reldec,
    train_m_reldec,
    train_reldec,
)
from reldec.bp import get_engine

GRID = SnrGrid((1.0, 1.5, 2.0, 2.5, 3.0))


def noiseless_dataset(code, count=1, snr=3.0, magnitude=25.0):
    return LlrDataset(
        llrs=np.full((count, code.n), magnitude),
        snr_db=np.full(count, snr),
        code_fingerprint=code.fingerprint,
        seed=0,
    )


def empty_dataset(code, snr=None):
    return LlrDataset(
        llrs=np.zeros((0, code.n)),
        snr_db=np.zeros(0),
        code_fingerprint=code.fingerprint,
        seed=0,
    )


class TestTrainReldec:
    def test_empty_dataset_identity(self, ab35, ab35_clustering):
        art = train_reldec(ab35_clustering, empty_dataset(ab35), Hyperparams(), seed=1)
        assert art.global_q == QTable(15)
        assert art.global_q.n_rows == 0
        assert art.run.episodes == []

    def test_single_noiseless_episode(self, ab35, ab35_clustering):
        hp = Hyperparams(ell_max=50)
        art = train_reldec(
            ab35_clustering, noiseless_dataset(ab35), hp, seed=2
        )
        rows = dict(art.global_q.rows_items())
        assert rows  # something was visited
        written = [v for vec in rows.values() for v in vec if v != 0.0]
        assert written and all(v > 0 for v in written)
        assert art.run.episodes[0].steps == 50

    def test_deterministic_and_seed_sensitive(self, ab35, ab35_clustering):
        ds = generate_dataset(ab35, GRID, 40, seed=9)
        hp = Hyperparams()
        a = train_reldec(ab35_clustering, ds, hp, seed=5)
        b = train_reldec(ab35_clustering, ds, hp, seed=5)
        c = train_reldec(ab35_clustering, ds, hp, seed=6)
        assert a.global_q == b.global_q
        assert dumps_policy(a) == dumps_policy(b)
        assert a.global_q != c.global_q

    def test_values_bounded_by_discount_sum(self, ab35, ab35_clustering):
        ds = generate_dataset(ab35, GRID, 60, seed=1)
        hp = Hyperparams(beta=0.9)
        art = train_reldec(ab35_clustering, ds, hp, seed=3)
        bound = 1.0 / (1.0 - hp.beta)
        for _, vec in art.global_q.rows_items():
            assert np.all(vec >= 0.0)
            assert np.all(vec <= bound + 1e-9)

    def test_every_episode_runs_exactly_ell_max(self, ab35, ab35_clustering):
        ds = generate_dataset(ab35, GRID, 10, seed=2)
        hp = Hyperparams(ell_max=17)
        art = train_reldec(ab35_clustering, ds, hp, seed=1)
        assert [r.steps for r in art.run.episodes] == [17] * 50

    def test_dataset_code_mismatch(self, ab35_clustering):
        other = build_ab_code(2, 3)
        ds = generate_dataset(other, GRID, 3, seed=0)
        with pytest.raises(ValueError, match="different code"):
            train_reldec(ab35_clustering, ds, Hyperparams(), seed=0)

    def test_accepts_arbitrary_codeword_reference(self, ab35, ab35_clustering):
        word = np.zeros(25, dtype=np.uint8)
        ds = generate_dataset(ab35, GRID, 4, seed=3)
        a = train_reldec(ab35_clustering, ds, Hyperparams(), seed=1,
                         transmitted=word)
        b = train_reldec(ab35_clustering, ds, Hyperparams(), seed=1)
        assert a.global_q == b.global_q  # explicit all-zero equals default
        with pytest.raises(ValueError, match="length"):
            train_reldec(ab35_clustering, ds, Hyperparams(), seed=1,
                         transmitted=np.zeros(24, dtype=np.uint8))

    def test_warm_start_from_existing_table(self, ab35, ab35_clustering):
        ds = generate_dataset(ab35, GRID, 5, seed=4)
        q0 = QTable(15)
        q0.set_value((0, 31), 0, 0.5)
        art = train_reldec(ab35_clustering, ds, Hyperparams(), seed=1, q0=q0)
        assert q0.value((0, 31), 0) == 0.5  # caller's table untouched


class TestTrainAmReldec:
    def test_degenerate_collapse_to_reldec_plus_global_pass(
        self, ab35, ab35_clustering
    ):
        # K=1, one meta-iteration, early exit disabled: the local phase is
        # exactly a RELDEC run over the local set, and the global phase
        # continues from the (mean of one) local table.
        hp = Hyperparams(K=1, loss_min=-1.0)
        local = generate_dataset(ab35, SnrGrid((2.0,)), 6, mixing="per_snr", seed=8)[0]
        global_ds = generate_dataset(ab35, GRID, 5, seed=9)
        art = train_am_reldec(
            ab35_clustering, global_ds, [local], hp, meta_iterations=1, seed=4
        )

        eng = get_engine(ab35_clustering)
        rng = substream(4, DOMAIN_TRAIN)
        refs = _reference_bits(ab35_clustering, None)
        q = QTable(15)
        phase = _AdaptPhase()
        for j in range(len(local)):
            _episode(eng, q, local.llrs[j], hp, rng, refs, adapt=phase)
        reldec_art = train_reldec(ab35_clustering, local, hp, seed=4)
        assert q == reldec_art.global_q  # local phase IS a reldec run
        q_global = QTable.mean([q])
        for j in range(len(global_ds)):
            _episode(eng, q_global, global_ds.llrs[j], hp, rng, refs)
        assert art.global_q == q_global

    def test_mean_seeding_across_two_tasks(self, ab35, ab35_clustering):
        hp = Hyperparams(K=2, loss_min=-1.0, ell_max=10)
        locals_ = generate_dataset(
            ab35, SnrGrid((1.0, 3.0)), 4, mixing="per_snr", seed=1
        )
        global_ds = generate_dataset(ab35, SnrGrid((1.0, 3.0)), 2, seed=2)
        art = train_am_reldec(
            ab35_clustering, global_ds, locals_, hp, meta_iterations=2, seed=3
        )
        assert art.scheme == "am_reldec"
        assert art.local_q is None  # global-only persistence
        phases = [(r.phase, r.meta_iteration) for r in art.run.episodes]
        # two meta-iterations, each: local tasks then the global pass
        assert phases == (
            [("local", 0)] * 4 + [("global", 0)] * 2
            + [("local", 1)] * 4 + [("global", 1)] * 2
        )

    def test_global_phase_episodes_always_full_length(self, ab35, ab35_clustering):
        hp = Hyperparams(K=1, ell_max=12, loss_min=1e-4)
        local = generate_dataset(ab35, SnrGrid((3.0,)), 3, mixing="per_snr", seed=5)[0]
        global_ds = generate_dataset(ab35, GRID, 5, seed=6)
        art = train_am_reldec(
            ab35_clustering, global_ds, [local], hp, meta_iterations=1, seed=7
        )
        for rec in art.run.episodes:
            assert rec.steps <= 12
            if rec.phase == "global":
                assert rec.steps == 12

    def test_k_mismatch_rejected(self, ab35, ab35_clustering):
        hp = Hyperparams(K=3)
        local = generate_dataset(ab35, SnrGrid((3.0,)), 2, mixing="per_snr", seed=5)
        global_ds = generate_dataset(ab35, GRID, 2, seed=6)
        with pytest.raises(ValueError, match="K=3"):
            train_am_reldec(ab35_clustering, global_ds, local, hp,
                            meta_iterations=1, seed=0)

    def test_duplicate_local_snrs_rejected(self, ab35, ab35_clustering):
        hp = Hyperparams(K=2)
        local = generate_dataset(ab35, SnrGrid((3.0,)), 2, mixing="per_snr", seed=5)[0]
        global_ds = generate_dataset(ab35, GRID, 2, seed=6)
        with pytest.raises(ValueError, match="distinct"):
            train_am_reldec(ab35_clustering, global_ds, [local, local], hp,
                            meta_iterations=1, seed=0)

    def test_early_exit_occurs_after_convergence(self, ab35, ab35_clustering):
        # beta=0 makes the TD target the reward itself, so on noiseless
        # data the loss threshold is reached well inside an episode
        hp = Hyperparams(alpha=0.5, beta=0.0, epsilon=0.3, ell_max=30,
                         loss_min=1e-4, x_loss_stride=5, K=1)
        local = noiseless_dataset(ab35, count=15, snr=3.0)
        global_ds = noiseless_dataset(ab35, count=1, snr=3.0)
        art = train_am_reldec(
            ab35_clustering, global_ds, [local], hp, meta_iterations=1, seed=1
        )
        local_steps = [r.steps for r in art.run.episodes if r.phase == "local"]
        assert any(s < hp.ell_max for s in local_steps)
        assert all(s <= hp.ell_max for s in local_steps)


class TestAdaptOnline:
    @pytest.fixture()
    def global_policy(self, ab35, ab35_clustering):
        ds = generate_dataset(ab35, GRID, 20, seed=11)
        return train_reldec(ab35_clustering, ds, Hyperparams(), seed=12)

    def test_empty_adaptation_is_identity(self, ab35, ab35_clustering, global_policy):
        adapted = adapt_online(
            global_policy, ab35_clustering, empty_dataset(ab35), seed=1
        )
        assert adapted.global_q == global_policy.global_q
        adapted_none = adapt_online(global_policy, ab35_clustering, None, seed=1)
        assert adapted_none.global_q == global_policy.global_q

    def test_seven_vs_seventy_five(self, ab35, ab35_clustering, global_policy):
        pool = generate_dataset(
            ab35, SnrGrid((2.0,)), 75, mixing="per_snr", seed=13
        )[0]
        small = adapt_online(global_policy, ab35_clustering, pool.take(7), seed=2)
        large = adapt_online(global_policy, ab35_clustering, pool, seed=2)
        assert small.global_q.n_rows >= global_policy.global_q.n_rows
        assert large.global_q.n_rows >= small.global_q.n_rows
        assert large.provenance["adapt_size"] == 75

    def test_fingerprint_mismatch(self, global_policy):
        other = build_ab_code(2, 3)
        other_cl = make_clusters(TannerGraph.from_matrix(other), 1)
        ds = generate_dataset(other, SnrGrid((2.0,)), 3, mixing="per_snr", seed=0)[0]
        with pytest.raises(PolicyCompatibilityError):
            adapt_online(global_policy, other_cl, ds, seed=0)

    def test_does_not_mutate_global(self, ab35, ab35_clustering, global_policy):
        snapshot = global_policy.global_q.copy()
        pool = generate_dataset(ab35, SnrGrid((2.0,)), 10, mixing="per_snr", seed=14)[0]
        adapt_online(global_policy, ab35_clustering, pool, seed=3)
        assert global_policy.global_q == snapshot


class TestTrainMReldec:
    def test_empty_local_equals_global(self, ab35, ab35_clustering):
        hp = Hyperparams(K=1)
        global_ds = generate_dataset(ab35, GRID, 6, seed=15)
        art = train_m_reldec(
            ab35_clustering, global_ds, [empty_dataset(ab35)], hp, seed=16
        )
        assert art.local_q is not None
        (local,) = art.local_q.values()
        assert local == art.global_q

    def test_locals_start_from_identical_snapshot(self, ab35, ab35_clustering):
        # two empty tasks both reproduce the stored global snapshot exactly
        hp = Hyperparams(K=2)
        global_ds = generate_dataset(ab35, GRID, 6, seed=17)
        art = train_m_reldec(
            ab35_clustering,
            global_ds,
            [empty_dataset(ab35), empty_dataset(ab35)],
            hp,
            seed=18,
        )
        locals_ = list(art.local_q.values())
        assert locals_[0] == locals_[1] == art.global_q

    def test_adapted_locals_stored_per_snr(self, ab35, ab35_clustering):
        hp = Hyperparams(K=2, ell_max=8)
        locals_ = generate_dataset(
            ab35, SnrGrid((1.0, 3.0)), 5, mixing="per_snr", seed=19
        )
        global_ds = generate_dataset(ab35, SnrGrid((1.0, 3.0)), 4, seed=20)
        art = train_m_reldec(ab35_clustering, global_ds, locals_, hp, seed=21)
        assert set(art.local_q) == {"1.0", "3.0"}
        assert art.run.dataset_sizes == {"global": 8, "local": [5, 5]}
        # global phase ran first and only once
        phases = [r.phase for r in art.run.episodes]
        assert phases[:8] == ["global"] * 8
        assert phases.count("local") == 10

    def test_budget_shape_recorded(self, ab35, ab35_clustering):
        # scaled-down version of the 1000-global / 14000-local split
        hp = Hyperparams(K=1, ell_max=3)
        global_ds = generate_dataset(ab35, SnrGrid((2.0,)), 10, seed=22)
        local = generate_dataset(ab35, SnrGrid((2.0,)), 140, mixing="per_snr", seed=23)[0]
        art = train_m_reldec(ab35_clustering, global_ds, [local], hp, seed=24)
        assert art.run.dataset_sizes == {"global": 10, "local": [140]}
        assert len([r for r in art.run.episodes if r.phase == "local"]) == 140
