"""Quantizer core: level structure, smooth/exact forward passes, decomposition."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dbq import (QuantizerParams, TernaryBranches, branch_coefficients,
                 branch_sparsity, decompose, forward_infer, forward_train,
                 project_alphas, quant_levels, reconstruct, sign_matrix,
                 smooth_step, step_coefficients, thresholds_sorted)

B2_ROW_ORDER = [(-1, -1), (-1, 0), (0, -1), (-1, 1), (0, 0),
                (1, -1), (0, 1), (1, 0), (1, 1)]


def b2_params(alphas=(1.5, 1.0), gamma1=1.0, gamma2=1.0):
    # thresholds at the midpoints of the 9 levels of alpha=(1.5, 1.0)
    return QuantizerParams(
        alphas=np.array(alphas), gamma1=gamma1, gamma2=gamma2,
        thresholds=np.array([-2.0, -1.25, -0.75, -0.25, 0.25, 0.75, 1.25, 2.0]))


class TestSignMatrix:
    def test_b1_rows(self):
        assert sign_matrix(1).tolist() == [[-1], [0], [1]]

    def test_b2_exact_order(self):
        assert [tuple(r) for r in sign_matrix(2)] == B2_ROW_ORDER

    @pytest.mark.parametrize("B", [1, 2, 3, 4])
    def test_rows_complete_and_distinct(self, B):
        E = sign_matrix(B)
        assert E.shape == (3 ** B, B)
        assert {tuple(r) for r in E} == set(itertools.product((-1, 0, 1), repeat=B))

    @pytest.mark.parametrize("B", [1, 2, 3, 4])
    def test_reference_levels_strictly_ascending(self, B):
        ref = np.array([1.5 ** (B - j) for j in range(1, B + 1)])
        levels = sign_matrix(B).astype(float) @ ref
        assert np.all(np.diff(levels) > 0)

    @pytest.mark.parametrize("bad", [0, 5, -1, 2.5, "2"])
    def test_rejects_bad_branch_count(self, bad):
        with pytest.raises(ValueError):
            sign_matrix(bad)

    def test_read_only(self):
        with pytest.raises(ValueError):
            sign_matrix(2)[0, 0] = 5


class TestBranchCoefficients:
    def test_b1(self):
        assert branch_coefficients(sign_matrix(1)).tolist() == [[1], [1]]

    def test_b2_rows(self):
        expected = [(0, 1), (1, -1), (-1, 2), (1, -1),
                    (1, -1), (-1, 2), (1, -1), (0, 1)]
        assert [tuple(r) for r in branch_coefficients(sign_matrix(2))] == expected

    @pytest.mark.parametrize("B", [1, 2, 3, 4])
    def test_columns_sum_to_two(self, B):
        assert np.all(branch_coefficients(sign_matrix(B)).sum(axis=0) == 2)

    @pytest.mark.parametrize("B", [1, 2, 3, 4])
    def test_value_range(self, B):
        b = branch_coefficients(sign_matrix(B))
        assert set(np.unique(b)) <= {-2, -1, 0, 1, 2}


class TestLevels:
    def test_b2_example_levels(self):
        got = quant_levels(np.array([1.5, 1.0]))
        assert np.allclose(
            got, [-2.5, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.5], atol=1e-15)

    def test_brute_force_oracle(self):
        # independent oracle: enumerate all sign combinations and sort
        rng = np.random.default_rng(7)
        for _ in range(25):
            a1 = rng.uniform(0.5, 3.0)
            alphas = np.array([a1, rng.uniform(a1 / 2, a1)])
            brute = np.sort([e1 * alphas[0] + e2 * alphas[1]
                             for e1, e2 in itertools.product((-1, 0, 1), repeat=2)])
            assert np.allclose(quant_levels(alphas), brute, atol=1e-12)

    def test_symmetry_and_extremes(self):
        for B in (1, 2, 3):
            alphas = np.array([1.5 ** (B - j) for j in range(1, B + 1)]) * 0.7
            v = quant_levels(alphas)
            assert np.allclose(v, -v[::-1], atol=1e-15)
            assert np.isclose(v[0], -alphas.sum())
            assert np.isclose(v[-1], alphas.sum())

    def test_monotone_under_ordering_constraint(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            a1 = rng.uniform(0.2, 4.0)
            a2 = rng.uniform(a1 / 2, a1)
            v = quant_levels(np.array([a1, a2]))
            assert np.all(np.diff(v) >= -1e-15)
            if a2 not in (a1, a1 / 2):
                assert np.all(np.diff(v) > 0)

    def test_b2_step_coefficients_match_expanded_form(self):
        # the eight step increments in terms of (alpha1, alpha2)
        rng = np.random.default_rng(3)
        for _ in range(100):
            a1 = rng.uniform(0.1, 5.0)
            a2 = rng.uniform(a1 / 2, a1)
            s = step_coefficients(np.array([a1, a2]))
            expected = [a2, a1 - a2, 2 * a2 - a1, a1 - a2,
                        a1 - a2, 2 * a2 - a1, a1 - a2, a2]
            assert np.max(np.abs(s - expected)) <= 1e-12


class TestSmoothStep:
    def test_half_at_zero(self):
        for temp in (0.5, 1.0, 77.0, 1e4):
            assert smooth_step(0.0, temp) == 0.5

    def test_saturation(self):
        assert smooth_step(0.1, 1e4) == pytest.approx(1.0, abs=1e-12)
        assert smooth_step(-0.1, 1e4) == pytest.approx(0.0, abs=1e-12)

    def test_derivative_at_zero_is_quarter_temp(self):
        for temp in (1.0, 5.0, 40.0):
            h = 1e-7
            deriv = (smooth_step(h, temp) - smooth_step(-h, temp)) / (2 * h)
            assert deriv == pytest.approx(temp / 4, rel=1e-6)

    def test_no_overflow_at_extreme_arguments(self):
        out = smooth_step(np.array([-1e6, -100.0, 100.0, 1e6]), 1.0)
        assert np.all(np.isfinite(out))
        assert out[0] == 0.0 and out[3] == 1.0
        out = smooth_step(np.array([-100.0, 100.0]), 1e4)
        assert out.tolist() == [0.0, 1.0]

    @given(st.floats(-50, 50), st.floats(-50, 50),
           st.floats(0.01, 100.0))
    def test_monotone(self, u1, u2, temp):
        lo, hi = min(u1, u2), max(u1, u2)
        assert smooth_step(lo, temp) <= smooth_step(hi, temp)

    def test_rejects_bad_temperature(self):
        with pytest.raises(ValueError):
            smooth_step(0.0, 0.0)


class TestForwardTrain:
    def test_odd_symmetry(self):
        p = b2_params()
        rng = np.random.default_rng(0)
        w = rng.normal(0, 1.5, 200)
        z_pos = forward_train(w, p, 7.0)
        z_neg = forward_train(-w, p, 7.0)
        assert np.allclose(z_neg, -z_pos, atol=1e-12)

    def test_large_temp_matches_infer(self):
        p = b2_params()
        w = np.array([0.3])
        assert abs(forward_train(w, p, 1e4)[0] - 0.5) <= 1e-3
        assert forward_infer(w, p)[0] == 0.5

    def test_matches_independent_scalar_evaluation(self):
        # independent oracle: direct scalar evaluation of the defining sum
        p = b2_params()
        b = branch_coefficients(sign_matrix(2))
        temp = 1.0
        for w in (0.3, -1.7, 0.0, 2.4):
            acc = 0.0
            for i in range(8):
                s_i = sum(b[i, j] * p.alphas[j] for j in range(2))
                u = p.gamma1 * w - p.thresholds[i]
                acc += s_i / (1.0 + math.exp(-temp * u))
            expected = p.gamma2 * (acc - p.alphas.sum())
            got = forward_train(np.array([w]), p, temp)[0]
            assert got == pytest.approx(expected, abs=1e-12)

    def test_temperature_limit_bound(self):
        # |train - infer| <= gamma2 * (N-1) * max|s_i| * exp(-T*delta)
        p = b2_params(gamma2=1.7)
        rng = np.random.default_rng(5)
        w = rng.uniform(-3, 3, 3000)
        dist = np.min(np.abs(p.gamma1 * w[:, None] - p.thresholds[None, :]), axis=1)
        keep = dist >= 0.05
        w, delta = w[keep], np.min(dist[keep])
        s_max = np.max(np.abs(step_coefficients(p.alphas)))
        for temp in (50.0, 200.0, 1000.0):
            gap = np.max(np.abs(forward_train(w, p, temp) - forward_infer(w, p)))
            bound = p.gamma2 * 8 * s_max * math.exp(-temp * delta)
            assert gap <= bound + 1e-15


class TestForwardInfer:
    def test_zero_maps_to_zero(self):
        p = b2_params()
        assert forward_infer(np.zeros(5), p).tolist() == [0.0] * 5

    def test_point_examples(self):
        p = b2_params()
        assert forward_infer(np.array([0.3]), p)[0] == 0.5
        assert forward_infer(np.array([-3.0]), p)[0] == -2.5

    def test_boundary_maps_to_lower_level(self):
        p = b2_params()
        levels = quant_levels(p.alphas)
        for i, t in enumerate(p.thresholds):
            z = forward_infer(np.array([t / p.gamma1]), p)[0]
            assert z == levels[i] * p.gamma2

    def test_outputs_are_levels(self):
        p = b2_params(alphas=(1.1, 0.8), gamma1=0.37, gamma2=2.9)
        rng = np.random.default_rng(1)
        w = rng.normal(0, 5, 5000)
        lv = set(np.unique(forward_infer(w, p)) / p.gamma2)
        levels = {float(x) for x in quant_levels(p.alphas)}
        for x in lv:
            assert any(abs(x - l) < 1e-12 for l in levels)

    def test_scale_covariance(self):
        p = b2_params(gamma1=1.0, gamma2=1.3)
        rng = np.random.default_rng(2)
        w = rng.normal(0, 2, 500)
        for c in (0.1, 2.0, 37.0):
            scaled = QuantizerParams(p.alphas, p.gamma1 / c, p.gamma2, p.thresholds)
            assert np.array_equal(forward_infer(c * w, scaled), forward_infer(w, p))

    def test_odd_symmetry_off_boundary(self):
        p = b2_params()
        rng = np.random.default_rng(3)
        w = rng.normal(0, 1.5, 1000)
        off = np.min(np.abs(w[:, None] - p.thresholds[None, :]), axis=1) > 1e-9
        w = w[off]
        assert np.array_equal(forward_infer(-w, p), -forward_infer(w, p))


class TestDecompose:
    def test_point_example(self):
        p = b2_params()
        t = decompose(np.array([0.3]), p)
        assert t.branch_vectors[:, 0].tolist() == [1, -1]
        assert t.scales.tolist() == [1.5, 1.0]
        assert reconstruct(t)[0] == 0.5

    def test_all_zero_weights(self):
        p = b2_params()
        t = decompose(np.zeros(16), p)
        assert np.all(t.branch_vectors == 0)

    def test_reconstruction_exact_random(self):
        p = b2_params(alphas=(0.9, 0.6), gamma1=1.7, gamma2=0.3)
        rng = np.random.default_rng(4)
        w = rng.normal(0, 2, 1024)
        t = decompose(w, p)
        assert np.array_equal(reconstruct(t), forward_infer(w, p))

    def test_reconstruction_exact_on_boundaries(self):
        p = b2_params(gamma1=0.77, gamma2=3.1)
        w = np.concatenate([p.thresholds / p.gamma1,
                            np.linspace(-4, 4, 997)])
        t = decompose(w, p)
        assert np.array_equal(reconstruct(t), forward_infer(w, p))

    @pytest.mark.parametrize("B", [1, 2, 3, 4])
    def test_all_branch_counts(self, B):
        alphas = np.array([1.5 ** (B - j) for j in range(1, B + 1)])
        levels = quant_levels(alphas)
        thresholds = (levels[:-1] + levels[1:]) / 2
        p = QuantizerParams(alphas, 1.0, 1.9, thresholds)
        rng = np.random.default_rng(B)
        w = rng.normal(0, 2, 2048)
        assert np.array_equal(reconstruct(decompose(w, p)), forward_infer(w, p))


class TestBranchSparsity:
    def test_all_zero(self):
        t = TernaryBranches(np.zeros((2, 8), dtype=np.int8), [1.0, 0.5])
        per, avg = branch_sparsity(t)
        assert per.tolist() == [1.0, 1.0] and avg == 1.0

    def test_direct_count(self):
        t = TernaryBranches(np.array([[1, -1, 0, 0]], dtype=np.int8), [2.0])
        per, avg = branch_sparsity(t)
        assert per[0] == 0.5 and avg == 0.5

    def test_weights_inside_zero_bin(self):
        p = b2_params()
        rng = np.random.default_rng(9)
        w = rng.uniform(-0.2, 0.2, 400)  # inside (-0.25, 0.25): the zero level
        _, avg = branch_sparsity(decompose(w, p))
        assert avg == 1.0


class TestParamsAndHelpers:
    def test_project_alphas_clamps(self):
        out = project_alphas(np.array([2.0, 3.0]))
        assert out.tolist() == [2.0, 2.0]
        out = project_alphas(np.array([2.0, 0.3]))
        assert out.tolist() == [2.0, 1.0]
        out = project_alphas(np.array([-1.0]))
        assert out[0] > 0

    def test_constraint_region_is_fixed_point(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a1 = rng.uniform(0.1, 3)
            a = np.array([a1, rng.uniform(a1 / 2, a1)])
            assert np.allclose(project_alphas(a), a)

    def test_threshold_monitor(self):
        p = b2_params()
        assert thresholds_sorted(p)
        p.thresholds[3], p.thresholds[4] = p.thresholds[4], p.thresholds[3]
        assert not thresholds_sorted(p)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            QuantizerParams(np.array([1.0, 0.5]), 1.0, 1.0, np.zeros(3))
        p = b2_params(alphas=(1.0, -0.5))
        with pytest.raises(ValueError):
            p.validate()

    @settings(max_examples=30)
    @given(st.integers(1, 3), st.floats(0.2, 3.0), st.floats(0.1, 4.0),
           st.integers(0, 2 ** 31 - 1))
    def test_decompose_property(self, B, scale, gamma2, seed):
        alphas = scale * np.array([1.5 ** (B - j) for j in range(1, B + 1)])
        levels = quant_levels(alphas)
        p = QuantizerParams(alphas, 1.0 / scale, gamma2,
                            (levels[:-1] + levels[1:]) / 2)
        w = np.random.default_rng(seed).normal(0, 2 * scale, 257)
        assert np.array_equal(reconstruct(decompose(w, p)), forward_infer(w, p))
