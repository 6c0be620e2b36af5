import math

import numpy as np
import pytest

from roblab.isodist import single
from roblab.theory import (BoundInputs, covering_log_size, depth_lower_bounds,
                           finite_class_failure_prob, generalization_gap_bound,
                           improved_failure_prob, informal_lower_bound,
                           lip_lower_bound, net_construct_and_verify,
                           rademacher_envelope, rademacher_estimate,
                           subgaussian_avg_check)


class TestCoveringLogSize:
    def test_dense_value(self):
        # 2 ln(1 + 60/0.6) = 2 ln 101
        assert covering_log_size(2, 1.0, 1.0, 0.6) == pytest.approx(9.23024103368252)

    def test_zero_parameters(self):
        assert covering_log_size(0, 1.0, 1.0, 0.6) == 0.0

    def test_sparse_value(self):
        # ln(10 * 101) = ln 1010
        assert covering_log_size(10, 1.0, 1.0, 0.6, s=1) == pytest.approx(6.917705609835305)

    def test_sparse_bounds_validated(self):
        with pytest.raises(ValueError):
            covering_log_size(4, 1.0, 1.0, 0.5, s=5)


class TestFiniteClass:
    def base(self, **kw):
        defaults = dict(n=1000, d=100, p=1, eps=0.5, c=1.0, k=1, L=1.0, logF=0.0)
        defaults.update(kw)
        return BoundInputs(**defaults)

    def test_hand_arithmetic(self):
        # 4 e^{-125/256} + 2 e^{-5/2}
        rep = finite_class_failure_prob(self.base())
        assert rep.value == pytest.approx(2.6188910020412317, rel=1e-12)
        assert any("exceeds 1" in c for c in rep.caveats)

    def test_monotone_decreasing_in_eps(self):
        vals = [finite_class_failure_prob(self.base(eps=e)).value
                for e in (0.2, 0.4, 0.6, 0.8)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_large_lipschitz_limit(self):
        # L -> inf: second term -> 2 e^{logF}
        rep = finite_class_failure_prob(self.base(L=1e9, logF=0.3))
        mixture = 4 * math.exp(-1000 * 0.25 / 512)
        assert rep.value == pytest.approx(mixture + 2 * math.exp(0.3), rel=1e-6)

    def test_logF_defaults_to_covering(self):
        inp = self.base(logF=None, p=3, W=2.0, J=5.0)
        rep = finite_class_failure_prob(inp)
        assert rep.inputs["logF"] == pytest.approx(covering_log_size(3, 2.0, 5.0, 0.5))


class TestImprovedBound:
    def test_hand_arithmetic(self):
        # sigma = 1, C2 = 1e4; C1 lowered so d = 100 meets the hypothesis
        inp = BoundInputs(n=1000, d=100, p=1, eps=0.5, c=1.0, k=1, L=1.0,
                          logF=0.0, sigma_sq=1.0, C1=25.0)
        rep = improved_failure_prob(inp)
        assert rep.value == pytest.approx(3.1504862546156915, rel=1e-12)

    def test_smaller_sigma_quadruples_exponent(self):
        base = BoundInputs(n=100, d=100, eps=0.5, logF=0.0, sigma_sq=1.0, C1=25.0, C2=1000.0)
        half = BoundInputs(n=100, d=100, eps=0.5, logF=0.0, sigma_sq=0.25, C1=25.0, C2=1000.0)
        mixture = 5 * math.exp(-100 * 0.25 / 512)
        term_base = improved_failure_prob(base).value - mixture
        term_half = improved_failure_prob(half).value - mixture
        assert term_base == pytest.approx(math.exp(-2.5), rel=1e-9)
        assert term_half == pytest.approx(math.exp(-10.0), rel=1e-9)
        assert math.log(term_base) / math.log(term_half) == pytest.approx(0.25, rel=1e-9)

    def test_dimension_hypothesis_refusal(self):
        inp = BoundInputs(n=1000, d=100, eps=0.5, logF=0.0, sigma_sq=1.0)  # C1 = 1e4
        with pytest.raises(ValueError, match="d >="):
            improved_failure_prob(inp)


class TestLipLowerBound:
    def test_informal_mode_headline_numbers(self):
        # n = 6e4 points in d = 784 with p = 2e5: sqrt(nd/p) = sqrt(235.2)
        assert informal_lower_bound(60_000, 784, 200_000, 1.0, 1.0) == pytest.approx(
            15.336231610144651)

    def test_informal_simple_values(self):
        assert informal_lower_bound(100, 100, 100, 0.3, 0.3) == pytest.approx(10.0)
        assert informal_lower_bound(50, 20, 1000, 0.2, 0.2) == pytest.approx(1.0)
        assert informal_lower_bound(100, 200, 100, 1.0, 1.0) == pytest.approx(
            math.sqrt(2) * informal_lower_bound(100, 100, 100, 1.0, 1.0))

    def test_delta_to_zero_kills_bound(self):
        # log(4/delta) dominates the denominator; decay is 1/sqrt(log(1/delta))
        vals = [lip_lower_bound(BoundInputs(n=100, d=50, p=0, eps=0.5, delta=d)).value
                for d in (0.1, 1e-3, 1e-30, 1e-300)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 0.1 * vals[0]

    def test_caveats_recorded_value_still_computed(self):
        rep = lip_lower_bound(BoundInputs(n=100, d=16, p=10, eps=0.1))
        assert rep.value > 0
        assert any("mixture-size" in c for c in rep.caveats)
        assert any("dimension" in c for c in rep.caveats)

    def test_sparse_vs_dense_relation(self):
        dense = lip_lower_bound(BoundInputs(n=10_000, d=200, p=50, eps=0.5,
                                            delta=0.05, W=1.0, J=1.0))
        sparse = lip_lower_bound(BoundInputs(n=10_000, d=200, p=50, eps=0.5,
                                             delta=0.05, W=1.0, J=1.0, s=50))
        ratio = 1.0 + math.log(50) / math.log(1 + 60 / 0.5)
        assert sparse.value <= dense.value
        assert sparse.value >= dense.value / math.sqrt(ratio) - 1e-12

    def test_monotonicity_lattice(self):
        base = dict(n=5000, d=100, p=20, eps=0.3, delta=0.05, sigma_sq=0.81,
                    c=1.0, W=1.0, J=2.0)
        val = lambda **kw: lip_lower_bound(BoundInputs(**{**base, **kw})).value
        v0 = val()
        assert val(n=10_000) > v0 and val(d=200) > v0 and val(eps=0.4) > v0
        assert val(p=40) < v0 and val(sigma_sq=1.0) < v0 and val(c=4.0) < v0
        assert val(W=3.0) < v0 and val(J=5.0) < v0


class TestDepthBounds:
    def test_depth_one_matches_informal(self):
        out = depth_lower_bounds(100, 100, 100, depth=1)
        assert out["with_depth"] == pytest.approx(informal_lower_bound(100, 100, 100, 1, 1))

    def test_bbar_e_matches_informal(self):
        out = depth_lower_bounds(100, 100, 100, b_bar=math.e)
        assert out["without_depth"] == pytest.approx(10.0)

    def test_depth_four(self):
        assert depth_lower_bounds(100, 100, 100, depth=4)["with_depth"] == pytest.approx(5.0)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            depth_lower_bounds(10, 10, 10)
        with pytest.raises(ValueError):
            depth_lower_bounds(10, 10, 10, b_bar=1.0)
        with pytest.raises(ValueError):
            depth_lower_bounds(10, 10, 10, depth=0)


class TestSubgaussianAveraging:
    T_GRID = [0.5 * i for i in range(1, 7)]

    def test_single_variable_inherits_bound(self):
        rep = subgaussian_avg_check(2.0, 1, 50_000, self.T_GRID, seed=0)
        assert rep.passed

    @pytest.mark.parametrize("gen", ["rademacher", "gaussian"])
    def test_builtin_generators_pass(self, gen):
        rep = subgaussian_avg_check(2.0, 50, 200_000, self.T_GRID, seed=1, generator=gen)
        assert rep.passed
        assert rep.mgf_estimate <= 2.0

    def test_constant_zero_generator(self):
        rep = subgaussian_avg_check(2.0, 10, 50_000, self.T_GRID, seed=0,
                                    generator=lambda rng, size: np.zeros(size))
        assert all(r.empirical == 0.0 for r in rep.rows)
        assert rep.mgf_estimate == pytest.approx(1.0)

    def test_block_sharding_deterministic(self):
        a = subgaussian_avg_check(2.0, 5, 30_000, [1.0], seed=4, block=7_000)
        b = subgaussian_avg_check(2.0, 5, 30_000, [1.0], seed=4, block=7_000)
        assert a.rows[0].empirical == b.rows[0].empirical
        assert a.mgf_estimate == b.mgf_estimate


class TestRademacher:
    def test_singleton_constant_one_n1(self):
        est = rademacher_estimate([lambda X: np.ones(len(X))], single("sphere", 3),
                                  n=1, N_outer=20_000, seed=0)
        assert est == pytest.approx(1.0)

    def test_singleton_zero(self):
        est = rademacher_estimate([lambda X: np.zeros(len(X))], single("sphere", 3),
                                  n=5, N_outer=5_000, seed=0)
        assert est == 0.0

    def test_singleton_constant_one_n2_closed_form(self):
        # (1/2) E|s1 + s2| = 1/2
        est = rademacher_estimate([lambda X: np.ones(len(X))], single("sphere", 3),
                                  n=2, N_outer=100_000, seed=0)
        assert est == pytest.approx(0.5, abs=0.01)

    def test_lipschitz_class_below_envelope(self):
        d, n, L, count = 50, 100, 2.0, 16
        rng = np.random.default_rng(5)
        U = rng.standard_normal((count, d))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        F = [(lambda u: (lambda X: np.clip(L * (X @ u), -1.0, 1.0)))(u) for u in U]
        est = rademacher_estimate(F, single("sphere", d), n, N_outer=2_000, seed=6)
        env = rademacher_envelope(n, d, 1.0, 1, L, math.log(count))
        assert 0.0 < est <= env

    def test_requires_nonempty_class(self):
        with pytest.raises(ValueError):
            rademacher_estimate([], single("sphere", 2), 2, 10, 0)


class TestGeneralizationGap:
    def test_first_term_dominates_at_k_equals_n(self):
        rep = generalization_gap_bound(BoundInputs(n=100, d=50, eps=0.5, k=100,
                                                   L=0.01, logF=1.0))
        assert rep.value == pytest.approx(1.0)

    def test_zero_log_class_size(self):
        rep = generalization_gap_bound(BoundInputs(n=100, d=50, eps=0.5, delta=0.5,
                                                   k=1, L=5.0, logF=0.0))
        assert rep.value == pytest.approx(max(math.sqrt(1 / 100),
                                              math.sqrt(math.log(2.0) / 100)))

    def test_vanishes_with_n(self):
        vals = [generalization_gap_bound(BoundInputs(n=n, d=50, eps=0.5, logF=3.0)).value
                for n in (100, 10_000, 1_000_000)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 0.05


class TestNetConstruction:
    def test_one_dimensional_example(self):
        rep = net_construct_and_verify(1, 1.0, 1.0, 0.8, oracle_grid_step=0.01)
        assert rep.covering_radius == pytest.approx(0.1)
        assert rep.net_size <= 6
        assert rep.net_size <= rep.size_bound == pytest.approx(76.0)
        assert rep.is_net and rep.passed

    def test_single_point_when_radius_huge(self):
        rep = net_construct_and_verify(2, 1.0, 1.0, 8.5, oracle_grid_step=0.05)
        assert rep.net_size == 1
        assert rep.is_net

    def test_two_dimensional_acceptance_size(self):
        rep = net_construct_and_verify(2, 1.0, 1.0, 0.3, oracle_grid_step=0.01)
        assert rep.is_net
        assert rep.net_size <= 40_401
        assert rep.passed

    def test_large_p_refused(self):
        with pytest.raises(ValueError):
            net_construct_and_verify(4, 1.0, 1.0, 0.5, oracle_grid_step=0.05)

    def test_oracle_catches_non_net(self):
        # shrink the radius below what the constructed grid achieves: the
        # verification oracle must notice the hole
        rep = net_construct_and_verify(1, 1.0, 1.0, 0.8, oracle_grid_step=0.001)
        spacing = 1.0 / (rep.net_size - 1)
        assert spacing / 2.0 <= rep.covering_radius


def test_bound_inputs_validation():
    with pytest.raises(ValueError):
        BoundInputs(n=0, d=10)
    with pytest.raises(ValueError):
        BoundInputs(n=10, d=10, eps=1.5)
    with pytest.raises(ValueError):
        BoundInputs(n=10, d=10, sigma_sq=2.0)


def test_bound_report_json():
    rep = lip_lower_bound(BoundInputs(n=10_000, d=100, p=10, eps=0.5))
    text = rep.to_json()
    assert '"name"' in text and '"caveats"' in text and '"formula"' in text
