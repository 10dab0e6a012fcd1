import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from incompat import povm as pv
from incompat.noise import ALL_KINDS, marginals
from incompat.repro import padding_channel
from incompat.search import haar_pair_povm

from conftest import bounds as bd, robustness as rb

D, R, P, JM, G = ALL_KINDS
SQ2, SQ3 = math.sqrt(2), math.sqrt(3)


def haar_pair(d, n, seed):
    rng = np.random.default_rng(seed)
    return pv.MeasurementSet([haar_pair_povm(d, n, rng) for _ in range(2)])


def split_pair():
    a, b = pv.mub_pair(2)
    return pv.MeasurementSet([pv.Povm([a[0] / 2, a[0] / 2, a[1]]), b])


class TestQuantities:
    @pytest.mark.parametrize("theta", [0.2, np.pi / 6, np.pi / 4])
    def test_theta(self, theta):
        q = bd.compute_quantities(pv.qubit_theta_pair(theta))
        assert q.f == pytest.approx(2)
        assert q.lam == pytest.approx(1 + math.cos(theta), abs=1e-12)
        assert q.g_d == pytest.approx(1) and q.g_r == pytest.approx(1) and q.g_p == pytest.approx(1)
        assert q.g_jm == pytest.approx(1 - math.cos(theta), abs=1e-12)

    @pytest.mark.parametrize("d", [3, 4, 5])
    def test_mub(self, d):
        q = bd.compute_quantities(pv.mub_pair(d))
        assert (q.f, q.lam) == pytest.approx((2, 1 + 1 / math.sqrt(d)), abs=1e-12)
        assert (q.g_d, q.g_r, q.g_p) == pytest.approx((2 / d,) * 3)
        assert q.g_jm == pytest.approx(0, abs=1e-12)

    def test_qubit_triplet(self):
        q = bd.compute_quantities(pv.prime_mub_set(2, 3))
        assert q.f == pytest.approx(3) and q.lam == pytest.approx((3 + SQ3) / 2, abs=1e-12)
        assert q.g_d == pytest.approx(1.5) and q.g_p == pytest.approx(1.5)
        assert q.g_jm == pytest.approx((3 - SQ3) / 2, abs=1e-12)

    def test_trace_normalised_undefined_with_zero_elements(self):
        s = pv.pad_with_zero_outcomes(pv.mub_pair(2), 3)
        assert bd.compute_quantities(s).f_tr is None
        with pytest.raises(bd.ZeroTraceElement):
            bd.trace_normalized_upper_bound(s, D)

    @given(st.integers(2, 3), st.integers(2, 4), st.integers(0, 2**31 - 1))
    def test_hierarchy(self, d, n, seed):
        s = pv.random_measurement_set(d, [n, n + 1], seed)
        q = bd.compute_quantities(s)
        assert min(q.g_d, q.g_r) >= q.g_p - 1e-12
        assert q.g_p >= q.g_jm - 1e-12 and q.g_jm >= -1e-12
        assert q.f > q.g_d and q.f > q.g_r
        assert q.f <= 2 + 1e-12

    def test_f_equality_for_trivial_sets(self):
        s = pv.MeasurementSet([pv.Povm.trivial(3, 2), pv.Povm.trivial(3, 3)])
        q = bd.compute_quantities(s)
        assert q.f == pytest.approx(q.g_d) and q.f == pytest.approx(q.g_r)

    def test_f_is_two_only_for_projective(self):
        assert bd.compute_quantities(pv.mub_pair(3)).f == pytest.approx(2)
        assert bd.compute_quantities(pv.random_measurement_set(3, [3, 3], 1)).f < 2 - 1e-6


class TestUpperBounds:
    def test_mub4_generalised(self):
        assert bd.upper_bound(pv.mub_pair(4), G) == pytest.approx(0.75, abs=1e-12)

    def test_theta_depolarising(self):
        assert bd.upper_bound(pv.qubit_theta_pair(np.pi / 4), D) == pytest.approx(1 / SQ2, abs=1e-12)

    def test_trivial_set(self):
        s = pv.MeasurementSet([pv.Povm.trivial(2, 2), pv.Povm.trivial(2, 3)])
        with pytest.warns(bd.TrivialSetWarning):
            assert bd.upper_bound(s, D) == 1.0

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_certificate_matches(self, kind):
        s = haar_pair(3, 4, 2)
        X, N = bd.upper_bound_certificate(s, kind)
        cert = rb.dual_upper_bound(s, kind, X, N)
        assert cert.shift == pytest.approx(0, abs=1e-12)
        assert cert.value == pytest.approx(bd.upper_bound(s, kind), abs=1e-12)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_trace_normalised_equals_standard_on_projective(self, kind):
        s = haar_pair(3, 3, 4)
        assert bd.trace_normalized_upper_bound(s, kind) == pytest.approx(bd.upper_bound(s, kind), abs=1e-9)

    def test_pre_processed_pair(self):
        s = pv.apply_pre_processing(pv.mub_pair(2), padding_channel())
        assert bd.upper_bound(s, D) == pytest.approx((9 * SQ2 - 1) / 14, abs=1e-12)
        q = bd.compute_quantities(s)
        raw = (q.lam_tr - q.g_tr) / (q.f_tr - q.g_tr)
        assert raw == pytest.approx(3 * (math.sqrt(13) + 1) / 10, abs=1e-12)
        # trace normalisation is worse here: the raw ratio exceeds one
        assert bd.trace_normalized_upper_bound(s, D) == pytest.approx(raw, abs=1e-12)

    def test_split_pair(self):
        s = split_pair()
        assert bd.upper_bound(s, D) == pytest.approx((4 * SQ2 + 1) / 7, abs=1e-12)
        assert bd.trace_normalized_upper_bound(s, D) == pytest.approx(1 / SQ2, abs=1e-12)
        X, N = bd.trace_normalized_certificate(s, D)
        assert rb.dual_upper_bound(s, D, X, N).value == pytest.approx(1 / SQ2, abs=1e-12)

    @given(st.integers(2, 3), st.integers(0, 2**31 - 1))
    def test_ordering(self, d, seed):
        s = pv.random_measurement_set(d, [d, d + 1], seed)
        q = bd.compute_quantities(s)
        if q.f <= q.lam:
            return
        up = {k: bd.upper_bound(s, k, q) for k in ALL_KINDS}
        assert max(up[D], up[R]) <= up[P] + 1e-12
        assert up[P] <= up[JM] + 1e-12 <= up[G] + 2e-12


class TestUniversal:
    def test_depolarising_d2(self):
        assert bd.universal_lower_bound(D, 2) == pytest.approx(1 / SQ2, abs=1e-15)

    def test_jm_d2(self):
        assert bd.universal_lower_bound(JM, 2) == pytest.approx(2 * (SQ2 - 1), abs=1e-15)

    def test_random(self):
        assert bd.universal_lower_bound(R, 2, (2, 2)) == pytest.approx(2 / 3)

    def test_probabilistic_is_max(self):
        v = bd.universal_lower_bound(P, 3, (2, 2))
        assert v == max(bd.universal_lower_bound(D, 3), bd.universal_lower_bound(R, 3, (2, 2)))

    def test_generalised(self):
        assert bd.universal_lower_bound(G, 9) == pytest.approx(2 / 3)

    def test_cloning_many(self):
        assert bd.cloning_lower_bound(3, 4) == pytest.approx((1 + 3 / 4) / 4)

    def test_one_dimensional(self):
        assert bd.universal_lower_bound(D, 1) == 1.0


class TestAnsatz:
    def test_cloning_parent_psd(self):
        s = haar_pair(3, 3, 7)
        ap = bd.cloning_parent(*s)
        assert ap.psd
        eta = 0.5 * (1 + 1 / 4)
        for x, m in enumerate(marginals(ap.parent)):
            target = eta * s[x].elements + (1 - eta) * s[x].traces()[:, None, None] * np.eye(3) / 3
            assert np.allclose(m.elements, target, atol=1e-12)

    def test_depolarising_ansatz_mub3(self):
        s = pv.mub_pair(3)
        x, y = bd._ansatz_xy(3)
        ap = bd.depolarising_xy_parent(*s, x, y)
        assert ap.psd
        eta = bd.universal_lower_bound(D, 3)
        assert bd.depolarising_xy_visibility(3, x, y) == pytest.approx(eta)
        for k, m in enumerate(marginals(ap.parent)):
            target = eta * s[k].elements + (1 - eta) * np.eye(3) / 3
            assert np.allclose(m.elements, target, atol=1e-12)

    def test_negative_gamma_fails(self):
        s = haar_pair(3, 3, 8)
        ap = bd.ansatz_parent(*s, 1.0, 1.0, -0.01 * np.ones((3, 3)))
        assert not ap.psd
        # the complement eigenvalue equals gamma_ab (over the normaliser)
        assert ap.formula_eigenvalues[..., 2] == pytest.approx(-0.01 / ap.normalisation)
        assert ap.min_eigenvalues.min() == pytest.approx(-0.01 / ap.normalisation, abs=1e-12)

    def test_not_normalised(self):
        s = haar_pair(3, 3, 8)
        with pytest.raises(bd.NotNormalized):
            bd.ansatz_parent(*s, -3.0, 0.0)

    @given(st.integers(2, 4), st.integers(0, 2**31 - 1))
    def test_formula_matches_spectrum(self, d, seed):
        s = haar_pair(d, d + 1, seed)
        rng = np.random.default_rng(seed)
        alpha, beta = rng.uniform(0, 1, d + 1), rng.uniform(0, 1, d + 1)
        gamma = rng.uniform(0, 0.2, (d + 1, d + 1))
        ap = bd.ansatz_parent(*s, alpha, beta, gamma)
        lam = ap.formula_eigenvalues
        expected = lam[..., :2].min(axis=-1) if d == 2 else lam.min(axis=-1)
        assert np.allclose(ap.min_eigenvalues, expected, atol=1e-9)

    @given(st.integers(2, 4), st.integers(0, 2**31 - 1))
    def test_generalised_parent_dominates(self, d, seed):
        s = haar_pair(d, d + 1, seed)
        parent, eta = bd.universal_parent(s, G)
        assert eta == pytest.approx(0.5 * (1 + 1 / math.sqrt(d)))
        assert np.linalg.eigvalsh(parent.reshape(-1, d, d))[:, 0].min() >= -1e-9
        for x, m in enumerate(marginals(parent)):
            assert np.linalg.eigvalsh(m.elements - eta * s[x].elements)[:, 0].min() >= -1e-9

    @given(st.sampled_from([D, R]), st.integers(2, 3), st.integers(0, 2**31 - 1))
    def test_universal_parents_exact(self, kind, d, seed):
        s = pv.random_measurement_set(d, [2, 3], seed)
        parent, eta = bd.universal_parent(s, kind)
        assert np.linalg.eigvalsh(parent.reshape(-1, d, d))[:, 0].min() >= -1e-9
        from incompat.noise import canonical_noise, mix

        target = mix(s, canonical_noise(kind, s), eta)
        assert marginals(parent).allclose(target, atol=1e-9)


class TestRefined:
    def test_identical_pair(self):
        a = pv.random_rank_one_projective(3, 1)
        s = pv.MeasurementSet([a, a])
        # overlaps of one are only reached up to rounding, which the square roots amplify
        assert bd.refined_lower_bound(s, D).value == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("d", [3, 4, 5])
    def test_qmub(self, d):
        rb_ = bd.refined_lower_bound(pv.qmub_pair(d), D)
        assert rb_.c_minus == pytest.approx(1 / SQ2) and rb_.c_plus == pytest.approx(1)
        assert rb_.value == pytest.approx(0.5 * (1 + SQ2 / (d + SQ2)), abs=1e-12)
        assert rb_.value == pytest.approx(bd.qmub_closed_form(d), abs=1e-12)

    def test_qubit_mub_at_critical(self):
        rb_ = bd.refined_lower_bound(pv.mub_pair(2), D)
        assert rb_.at_critical
        assert rb_.value == pytest.approx(1 / SQ2, abs=1e-12)

    def test_not_rank_one(self):
        with pytest.raises(bd.NotRankOne):
            bd.refined_lower_bound(pv.random_measurement_set(3, [3, 3], 2), D)

    def test_zero_elements_have_zero_overlap(self):
        s = pv.pad_with_zero_outcomes(pv.mub_pair(2), 3)
        c = bd.overlaps(s)
        assert np.all(c[2, :] == 0) and np.all(c[:, 2] == 0)
        assert bd.refined_lower_bound(s, D).value == pytest.approx(1 / SQ2, abs=1e-12)

    @pytest.mark.parametrize("d", [2, 3, 5])
    def test_limits(self, d):
        crit = bd.critical_overlap(D, d)
        vals = [bd.refined_depolarising(d, cm, cp) for cm, cp in
                [(crit * (1 - t), crit + (1 - crit) * t) for t in np.linspace(0.1, 1, 10)]]
        assert np.all(np.diff(vals) >= -1e-12)
        assert bd.refined_depolarising(d, 0.0, 1.0) == pytest.approx(1.0, abs=1e-12)
        assert bd.refined_generalised(d, 0.0, 1.0) == pytest.approx((3 * d + 1) / (4 * d), abs=1e-12)

    @given(st.integers(2, 4), st.integers(0, 2**31 - 1))
    def test_refined_parent_valid(self, d, seed):
        s = haar_pair(d, d, seed)
        parent, eta = bd.refined_depolarising_parent(s)
        assert eta == pytest.approx(bd.refined_lower_bound(s, D).value)
        assert np.linalg.eigvalsh(parent.reshape(-1, d, d))[:, 0].min() >= -1e-9
        from incompat.noise import canonical_noise, mix

        assert marginals(parent).allclose(mix(s, canonical_noise(D, s), eta), atol=1e-9)


class TestEmbedding:
    @pytest.mark.parametrize("d", [3, 4, 5, 8])
    def test_qmub(self, d):
        v = bd.embedding_upper_bound(1 + 1 / SQ2, 2, d)
        assert v == pytest.approx(0.5 * (1 + SQ2 / (d + SQ2)), abs=1e-12)

    @pytest.mark.parametrize("d", [2, 3, 5])
    def test_no_embedding(self, d):
        v = bd.embedding_upper_bound(1 + 1 / math.sqrt(d), d, d)
        assert v == pytest.approx(0.5 * (1 + 1 / (math.sqrt(d) + 1)), abs=1e-12)
        assert v == pytest.approx(bd.upper_bound(pv.mub_pair(d), D), abs=1e-12)

    def test_domain(self):
        with pytest.raises(pv.DomainError):
            bd.embedding_upper_bound(2.5, 2, 3)
        with pytest.raises(pv.DomainError):
            bd.embedding_upper_bound(1.5, 3, 2)

    def test_qubit_triplet_into_qutrit(self):
        inner = pv.prime_mub_set(2, 3)
        eb = bd.set_embedding_bound(inner, 3)
        assert eb.value == pytest.approx(0.5273, abs=1e-4)
        emb = pv.embed_computational(inner, 3)
        cert = rb.dual_upper_bound(emb, D, eb.certificate(inner, 3))
        assert cert.value == pytest.approx(eb.value, abs=1e-9)
        assert rb.robustness(emb, D) == pytest.approx(eb.value, abs=1e-6)

    def test_block_structure(self):
        v = bd.block_structure_p_upper_bound(pv.named_pair("qMUB4"), 2)
        assert v == pytest.approx(0.5 * (1 + SQ2 / (4 + SQ2)), abs=1e-12)
        assert v == pytest.approx(0.63060, abs=1e-5)
        assert rb.robustness(pv.named_pair("qMUB4"), P) <= v + 1e-7

    def test_block_structure_single_block(self):
        s = pv.mub_pair(3)
        assert bd.block_structure_p_upper_bound(s, 3) == pytest.approx(bd.upper_bound(s, P), abs=1e-12)

    def test_not_block_structured(self):
        with pytest.raises(bd.NotBlockStructured):
            bd.block_structure_p_upper_bound(pv.mub_pair(4), 2)


class TestZeroOutcomes:
    def test_limit_theta(self):
        assert bd.zero_outcome_limit_bound(pv.qubit_theta_pair(np.pi / 4)) == pytest.approx(0.5, abs=1e-12)

    def test_limit_projective(self):
        assert bd.zero_outcome_limit_bound(pv.mub_pair(5)) == pytest.approx(0.5, abs=1e-12)

    def test_precondition(self):
        with pytest.raises(bd.PreconditionFailed):
            bd.zero_outcome_limit_bound(pv.qubit_theta_pair(0.0))

    @pytest.mark.parametrize("d,n", [(2, 2), (2, 3), (2, 5), (3, 4), (3, 6)])
    def test_finite_padding_is_tight(self, d, n):
        s = pv.pad_with_zero_outcomes(pv.mub_pair(d), n)
        ub = bd.zero_outcome_upper_bound(s)
        cert = rb.dual_upper_bound(s, R, bd.zero_outcome_certificate(s))
        assert cert.shift == pytest.approx(0, abs=1e-12) and cert.value == pytest.approx(ub, abs=1e-12)
        assert rb.robustness(s, R) == pytest.approx(ub, abs=1e-7)

    def test_tends_to_limit(self):
        s = pv.mub_pair(3)
        vals = [bd.zero_outcome_upper_bound(pv.pad_with_zero_outcomes(s, n)) for n in (10, 40, 160)]
        assert np.all(np.diff(vals) < 0)
        assert vals[-1] == pytest.approx(bd.zero_outcome_limit_bound(s), abs=2e-2)
        assert vals[-1] > bd.zero_outcome_limit_bound(s)


class TestRelations:
    def test_d_to_jm(self):
        assert bd.relation_transfer(1 / SQ2, 2, JM) == pytest.approx(2 * (SQ2 - 1), abs=1e-12)

    def test_d_to_g(self):
        assert bd.relation_transfer(1 / SQ2, 2, G) == pytest.approx(0.5 * (1 + 1 / SQ2), abs=1e-12)

    def test_r_to_g(self):
        assert bd.relation_transfer(0.6, 3, G, source=R, n_max=4) == pytest.approx(0.6 + 0.4 / 4)

    @pytest.mark.parametrize("target,source", [(JM, D), (G, D), (G, R)])
    def test_fixed_point(self, target, source):
        assert bd.relation_transfer(1.0, 3, target, source=source, n_max=3) == 1.0

    def test_needs_outcome_count(self):
        with pytest.raises(ValueError):
            bd.relation_transfer(0.6, 3, G, source=R)


class TestCascade:
    def test_pair(self):
        res = bd.cascade_lower_bound(pv.mub_pair(3), D)
        assert res.eta == pytest.approx(bd.universal_lower_bound(D, 3), abs=1e-12)

    def test_three_qubits_depolarising(self):
        res = bd.cascade_lower_bound(pv.prime_mub_set(2, 3), D)
        assert res.eta == pytest.approx((1 + 1 / SQ2) / 3, abs=1e-12)
        assert np.linalg.eigvalsh(res.parent.reshape(-1, 2, 2))[:, 0].min() >= -1e-12

    def test_four_qubits_generalised(self):
        s = pv.random_measurement_set(2, [2, 2, 2, 2], seed=3, restriction="rank-one")
        res = bd.cascade_lower_bound(s, G)
        assert res.eta == pytest.approx((0.5 * (1 + 1 / SQ2)) ** 2, abs=1e-12)
        for x, m in enumerate(marginals(res.parent)):
            assert np.linalg.eigvalsh(m.elements - res.eta * s[x].elements)[:, 0].min() >= -1e-9

    @pytest.mark.parametrize("k", [3, 4, 5])
    def test_parent_exact_marginals(self, k):
        s = pv.random_measurement_set(3, [3] * k, seed=k, restriction="rank-one")
        res = bd.cascade_lower_bound(s, D)
        assert np.linalg.eigvalsh(res.parent.reshape(-1, 3, 3))[:, 0].min() >= -1e-9
        from incompat.noise import canonical_noise, mix

        assert marginals(res.parent).allclose(mix(s, canonical_noise(D, s), res.eta), atol=1e-9)
        assert res.eta <= rb.robustness(s, D) + 2e-6 if k == 3 else True


class TestClosedForms:
    def test_qubit_mub(self):
        vals = tuple(bd.mub_closed_form(2, k) for k in ALL_KINDS)
        expected = (1 / SQ2, 1 / SQ2, 1 / SQ2, 2 * (SQ2 - 1), 0.5 * (1 + 1 / SQ2))
        assert vals == pytest.approx(expected, abs=1e-15)

    def test_qutrit_jm(self):
        assert bd.mub_closed_form(3, JM) == pytest.approx(0.5 * (1 + 1 / SQ3))
        assert bd.mub_closed_form(3, JM) == pytest.approx(0.78868, abs=1e-5)

    def test_d9_g(self):
        assert bd.mub_closed_form(9, G) == pytest.approx(2 / 3)

    @pytest.mark.parametrize("d", [2, 3, 4, 5])
    def test_mub_parent(self, d):
        s = pv.mub_pair(d)
        parent = bd.mub_parent(s)
        assert np.linalg.eigvalsh(parent.reshape(-1, d, d))[:, 0].min() >= -1e-12
        assert np.allclose(parent.sum(axis=(0, 1)), np.eye(d))

    def test_noise_parent_domain(self):
        with pytest.raises(pv.DomainError):
            bd.mub_noise_parent(pv.mub_pair(2))

    @pytest.mark.parametrize("d", [3, 4, 5])
    def test_noise_parent(self, d):
        s = pv.mub_pair(d)
        eta = bd.mub_closed_form(d, JM)
        h = bd.mub_noise_parent(s)
        assert np.linalg.eigvalsh(h.reshape(-1, d, d))[:, 0].min() >= -1e-12
        assert np.allclose(h.sum(axis=(0, 1)), (1 - eta) * np.eye(d))

    def test_triplet_table(self):
        t = bd.QUBIT_TRIPLET
        assert t[D] == pytest.approx(1 / SQ3) and t[P] == pytest.approx(1 / SQ3)
        assert t[JM] == pytest.approx(SQ3 - 1) and t[G] == pytest.approx(0.5 * (1 + 1 / SQ3))

    def test_triplet_parent_on_mubs(self):
        s = pv.prime_mub_set(2, 3)
        par = bd.qubit_triplet_parent(s)
        assert np.linalg.eigvalsh(par.reshape(-1, 2, 2))[:, 0].min() >= -1e-12
        eta = 1 / SQ3
        for x, m in enumerate(marginals(par)):
            assert np.abs(m.elements - (eta * s[x].elements + (1 - eta) * np.eye(2) / 2)).max() <= 1e-10

    def test_triplet_parent_rejects(self):
        with pytest.raises(bd.NotRankOne):
            bd.qubit_triplet_parent(pv.prime_mub_set(3, 3))


class TestReport:
    def test_entries_consistent(self):
        rep = bd.bound_report(pv.qmub_pair(3))
        for kind in ("d", "r", "p", "jm", "g"):
            lows = [e.value for e in rep.entries if e.measure == kind and e.side == "lower"]
            ups = [e.value for e in rep.entries if e.measure == kind and e.side == "upper"]
            assert lows and ups
            assert max(lows) <= min(ups) + 1e-9
        data = json.loads(rep.to_json())
        assert data["dim"] == 3 and all("source" in e for e in data["bounds"])

    def test_best(self):
        rep = bd.bound_report(pv.qmub_pair(4))
        lo, up = rep.best("d", "lower"), rep.best("d", "upper")
        assert lo <= up
        # the generic dual ansatz is loose here; the embedding bound closes the gap
        assert lo == pytest.approx(bd.embedding_upper_bound(1 + 1 / SQ2, 2, 4), abs=1e-12)
