import json
import math

import numpy as np
import pytest

from incompat import povm as pv
from incompat.search import (
    SearchConfig,
    SearchRecord,
    devil_path,
    estimate_chi,
    figure_curves,
    haar_pair_povm,
    sample_set,
)

from conftest import assert_valid_povm, bounds as bd, robustness as rb

SQ2 = math.sqrt(2)


class TestConfig:
    def test_defaults(self):
        cfg = SearchConfig(3)
        assert cfg.outcome_counts == (3, 3) and cfg.k == 2
        assert "r" not in cfg.measures

    def test_random_on_request(self):
        assert "r" in SearchConfig(2, measures=("r",), include_random=True).measures

    def test_sample_count(self):
        with pytest.raises(ValueError):
            SearchConfig(2, samples=0)

    def test_projective_shape(self):
        with pytest.raises(pv.DomainError):
            SearchConfig(3, outcome_counts=(3, 4))

    def test_too_large(self):
        with pytest.raises(rb.TooLarge):
            SearchConfig(4, outcome_counts=(4,) * 9)


class TestSampling:
    @pytest.mark.parametrize("d,n", [(2, 2), (3, 2), (3, 4), (4, 3)])
    def test_haar_pair_povm(self, d, n):
        m = haar_pair_povm(d, n, np.random.default_rng(0))
        assert m.n_outcomes == n and m.is_valid()
        if n >= d:
            assert m.is_rank_one()

    def test_projective_samples(self):
        s = sample_set(SearchConfig(3, seed=5), 7)
        assert all(m.is_projective() and m.is_rank_one() for m in s)
        assert s.allclose(sample_set(SearchConfig(3, seed=5), 7))

    @pytest.mark.parametrize("restriction,counts", [("rank-one", (3, 4)), ("general", (2, 3))])
    def test_other_restrictions(self, restriction, counts):
        s = sample_set(SearchConfig(2 if restriction == "general" else 3, outcome_counts=counts,
                                    restriction=restriction), 0)
        for m in s:
            assert_valid_povm(m.elements)


class TestEstimate:
    def test_deterministic(self):
        cfg = dict(d=2, samples=20, seed=11, measures=("d", "g"))
        a, b = estimate_chi(SearchConfig(**cfg)), estimate_chi(SearchConfig(**cfg))
        assert a.best_eta == b.best_eta and a.best_index == b.best_index

    def test_worker_count_irrelevant(self, monkeypatch):
        monkeypatch.setenv("INCOMPAT_THREADS", "2")
        cfg = dict(d=2, samples=12, seed=3, measures=("d",), checkpoint_every=4)
        one = estimate_chi(SearchConfig(**cfg, workers=1))
        two = estimate_chi(SearchConfig(**cfg, workers=2))
        assert one.best_eta == two.best_eta and one.best_index == two.best_index

    def test_resume(self, tmp_path):
        path = str(tmp_path / "ck.json")
        full = estimate_chi(SearchConfig(2, samples=30, seed=4, measures=("jm",)))
        part = estimate_chi(SearchConfig(2, samples=10, seed=4, measures=("jm",), checkpoint=path))
        assert part.samples_done == 10
        data = json.loads(open(path).read())
        assert set(data) >= {"config", "seed", "samples_done", "best_eta", "best_set"}
        resumed = estimate_chi(SearchConfig(2, samples=30, seed=4, measures=("jm",), checkpoint=path))
        assert resumed.samples_done == 30
        assert resumed.best_eta == full.best_eta

    def test_mismatched_checkpoint_ignored(self, tmp_path):
        path = str(tmp_path / "ck.json")
        estimate_chi(SearchConfig(2, samples=5, seed=1, measures=("d",), checkpoint=path))
        rec = estimate_chi(SearchConfig(2, samples=5, seed=2, measures=("d",), checkpoint=path))
        fresh = estimate_chi(SearchConfig(2, samples=5, seed=2, measures=("d",)))
        assert rec.best_eta == fresh.best_eta

    def test_record_round_trip(self):
        cfg = SearchConfig(2, samples=3, measures=("d",))
        rec = estimate_chi(cfg)
        back = SearchRecord.from_dict(cfg, json.loads(json.dumps(rec.to_dict())))
        assert back.best_eta == rec.best_eta
        assert back.best_set["d"].allclose(rec.best_set["d"])

    def test_floor_and_universal_bound(self):
        rec = estimate_chi(SearchConfig(3, samples=15, seed=9, measures=("d", "p", "jm", "g"), keep_log=True))
        assert len(rec.log) == 15
        for row in rec.log:
            for m in ("d", "p", "jm", "g"):
                assert row[m] >= 0.5 - 2e-6
        for m, v in rec.best_eta.items():
            assert v >= bd.universal_lower_bound(m, 3, (3, 3)) - 2e-6

    def test_named_pair_included(self):
        rec = estimate_chi(SearchConfig(3, samples=10, seed=0, measures=("d",), include=("qMUB3",)))
        assert rec.best_index["d"] == 0
        assert rec.best_eta["d"] == pytest.approx(0.6602, abs=5e-5)
        assert rec.best_eta["d"] < bd.mub_closed_form(3, "d")


class TestDevilPath:
    def test_theta_endpoint(self):
        (_, _, s), = devil_path(theta=math.pi / 4)
        assert s.allclose(pv.named_pair("dev3"), atol=1e-12)

    def test_theta_other_endpoint(self):
        (_, _, s), = devil_path(theta=math.pi / 2)
        assert s.allclose(pv.named_pair("qMUB3"), atol=1e-12)

    def test_t_endpoints(self):
        (_, _, s0), (_, _, s1) = devil_path(t=[0.0, 1.0])
        assert s0.allclose(pv.named_pair("qMUB3"), atol=1e-12)
        assert s1.allclose(pv.named_pair("MUB3"), atol=1e-10)

    def test_midpoint_valid(self):
        (_, _, s), = devil_path(t=0.5)
        assert s.is_valid() and s[1].is_rank_one() and s[1].is_projective()

    def test_domain(self):
        with pytest.raises(pv.DomainError):
            devil_path(theta=0.1)
        with pytest.raises(pv.DomainError):
            devil_path(t=1.5)


class TestFigures:
    def test_runex(self):
        tab = figure_curves("fig_runex", resolution=5)
        row = dict(zip(tab.columns, tab.rows[2]))
        assert row["theta"] == pytest.approx(math.pi / 8)
        c, s = math.cos(math.pi / 8), math.sin(math.pi / 8)
        assert row["closed_d"] == pytest.approx(1 / (c + s), abs=1e-12)
        assert row["closed_d"] == pytest.approx(0.76537, abs=1e-5)
        assert row["closed_g"] == pytest.approx((SQ2 + 1) / (SQ2 + c + s), abs=1e-12)
        for k in ("d", "r", "p", "jm", "g"):
            assert row[f"eta_{k}"] == pytest.approx(row[f"closed_{k}"], abs=1e-6)
        assert tab.to_csv().startswith("theta,eta_d")

    def test_runex_grid(self):
        tab = figure_curves("fig_runex", resolution=50)
        for k in ("d", "jm", "g"):
            assert np.allclose(tab.column(f"eta_{k}"), tab.column(f"closed_{k}"), atol=1e-6)
        assert np.allclose(tab.column("eta_d"), tab.column("eta_r"), atol=1e-6)
        assert np.allclose(tab.column("eta_d"), tab.column("eta_p"), atol=1e-6)

    def test_chi(self):
        tab = figure_curves("fig_chi")
        row = dict(zip(tab.columns, tab.rows[-1]))
        assert row["d"] == 8
        assert row["qmub_d"] == pytest.approx(0.5 * (1 + SQ2 / (8 + SQ2)), abs=1e-12)
        assert row["qmub_d"] == pytest.approx(0.575110552411, abs=1e-12)
        assert all(q <= m for q, m in zip(tab.column("qmub_d")[1:], tab.column("mub_d")[1:]))

    def test_devil(self):
        tab = figure_curves("fig_devil", resolution=4)
        eta = {k: tab.column(f"eta_{k}") for k in ("d", "p", "jm", "g")}
        dev, qmub, mub = 0, 3, len(tab.rows) - 1
        assert tab.rows[qmub][1:3] == ["theta", pytest.approx(math.pi / 2)]
        assert eta["d"][qmub] == pytest.approx(0.6602, abs=5e-5)
        assert eta["p"][dev] == pytest.approx(0.6813, abs=5e-5)
        assert eta["d"][mub] == pytest.approx(0.6830, abs=5e-5)
        for k in ("jm", "g"):
            assert eta[k][mub] <= min(eta[k]) + 1e-6
        assert eta["d"][qmub] < eta["d"][mub]
        assert eta["p"][dev] < eta["p"][mub]

    def test_resolution(self):
        with pytest.raises(ValueError):
            figure_curves("fig_chi", resolution=1)
        with pytest.raises(ValueError):
            figure_curves("fig_nothing")
