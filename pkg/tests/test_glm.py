"""GLM fitting, t maps, normalized residuals and Z equivalents."""

import numpy as np
import pytest
from scipy import stats

from topostat import (
    DesignMatrix,
    FieldType,
    StatField,
    fit,
    normalized_residuals,
    t_map,
    z_equivalent,
)


def ones_design(n):
    return DesignMatrix(np.ones((n, 1)), ("mean",))


class TestFit:
    def test_ones_column_hand_values(self):
        out = fit(np.array([[1.0], [2.0], [3.0]]), ones_design(3))
        assert out.betas[0, 0] == pytest.approx(2.0)
        np.testing.assert_allclose(out.residuals[:, 0], [-1.0, 0.0, 1.0])
        assert out.sigma2[0] == pytest.approx(1.0)
        assert out.dof == 2

    def test_data_in_column_space(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((8, 2))
        coef = np.array([[1.5], [-0.5]])
        out = fit(x @ coef, DesignMatrix(x, ("a", "b")))
        np.testing.assert_allclose(out.residuals, 0.0, atol=1e-12)
        np.testing.assert_allclose(out.sigma2, 0.0, atol=1e-24)

    def test_matches_normal_equation_oracle(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((10, 3))
        data = rng.standard_normal((10, 40))
        out = fit(data, DesignMatrix(x, ("a", "b", "c")))
        oracle = np.linalg.solve(x.T @ x, x.T @ data)
        np.testing.assert_allclose(out.betas, oracle, atol=1e-8)

    def test_residuals_orthogonal_to_design(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((12, 4))
        data = rng.standard_normal((12, 25))
        out = fit(data, DesignMatrix(x, tuple("abcd")))
        inner = x.T @ out.residuals
        scale = np.linalg.norm(x) * np.linalg.norm(out.residuals)
        assert np.abs(inner).max() < 1e-8 * scale

    def test_zero_dof_rejected(self):
        with pytest.raises(ValueError, match="degrees of freedom"):
            fit(np.eye(2), DesignMatrix(np.eye(2), ("a", "b")))

    def test_row_mismatch_rejected(self):
        with pytest.raises(ValueError, match="rows"):
            fit(np.ones((4, 1)), ones_design(3))


class TestTMap:
    def test_one_sample_hand_value(self):
        out = fit(np.array([[1.0], [2.0], [3.0]]), ones_design(3))
        stat = t_map(out, [1.0])
        assert stat.values[0] == pytest.approx(2.0 / np.sqrt(1.0 / 3.0), abs=1e-4)
        assert stat.field_type == FieldType.student_t(2)

    def test_zero_contrast_gives_zero(self):
        rng = np.random.default_rng(4)
        out = fit(rng.standard_normal((6, 10)),
                  DesignMatrix(rng.standard_normal((6, 2)), ("a", "b")))
        stat = t_map(out, [0.0, 0.0])
        np.testing.assert_array_equal(stat.values, 0.0)

    def test_paired_design_matches_ttest_rel(self):
        rng = np.random.default_rng(5)
        n_sub, n_vert = 9, 30
        cond_a = rng.standard_normal((n_sub, n_vert))
        cond_b = cond_a + 0.4 + rng.standard_normal((n_sub, n_vert))
        data = np.concatenate([cond_a, cond_b], axis=0)
        condition = np.concatenate([np.zeros(n_sub), np.ones(n_sub)])
        subjects = np.tile(np.eye(n_sub), (2, 1))
        x = np.column_stack([condition, subjects])
        design = DesignMatrix(x, ("cond",) + tuple(f"s{i}" for i in range(n_sub)))
        stat = t_map(fit(data, design), [1.0] + [0.0] * n_sub)
        oracle = stats.ttest_rel(cond_b, cond_a, axis=0).statistic
        np.testing.assert_allclose(stat.values, oracle, atol=1e-8)
        assert stat.field_type.dof == n_sub - 1

    def test_scale_invariance(self):
        rng = np.random.default_rng(6)
        data = rng.standard_normal((7, 15))
        design = ones_design(7)
        t1 = t_map(fit(data, design), [1.0]).values
        t2 = t_map(fit(data * 3.7, design), [1.0]).values
        np.testing.assert_allclose(t1, t2, rtol=1e-12)

    def test_shift_by_column_space(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((9, 2))
        design = DesignMatrix(x, ("a", "b"))
        data = rng.standard_normal((9, 12))
        v = np.array([2.0, -1.0])
        f1 = fit(data, design)
        f2 = fit(data + (x @ v)[:, None], design)
        np.testing.assert_allclose(f2.betas, f1.betas + v[:, None], atol=1e-10)
        np.testing.assert_allclose(f2.residuals, f1.residuals, atol=1e-10)
        np.testing.assert_allclose(f2.sigma2, f1.sigma2, atol=1e-12)
        r1, r2 = normalized_residuals(f1), normalized_residuals(f2)
        np.testing.assert_allclose(r1.u, r2.u, atol=1e-10)

    def test_zero_variance_vertices(self):
        data = np.array([[1.0, -2.0, 0.0]] * 4)  # constant over observations
        stat = t_map(fit(data, ones_design(4)), [1.0])
        assert stat.values[0] == np.inf
        assert stat.values[1] == -np.inf
        assert stat.values[2] == 0.0

    def test_non_estimable_contrast_rejected(self):
        x = np.column_stack([np.ones(6), np.ones(6)])  # rank 1
        out = fit(np.random.default_rng(8).standard_normal((6, 3)),
                  DesignMatrix(x, ("a", "b")))
        with pytest.raises(ValueError, match="estimable"):
            t_map(out, [1.0, -1.0])
        # the summed contrast lies in the row space and is fine
        t_map(out, [0.5, 0.5])

    def test_vertexwise_false_positive_rate(self):
        # white-noise calibration: tail beyond t_crit(0.05) hits 5%
        rng = np.random.default_rng(11)
        n_obs, n_vert = 8, 200_000
        data = rng.standard_normal((n_obs, n_vert))
        stat = t_map(fit(data, ones_design(n_obs)), [1.0])
        t_crit = stats.t.isf(0.05, n_obs - 1)
        rate = (stat.values >= t_crit).mean()
        ci = 3 * np.sqrt(0.05 * 0.95 / n_vert)
        assert abs(rate - 0.05) < ci


class TestNormalizedResiduals:
    def test_three_four_five(self):
        # regressor only explains the first observation, leaving residuals
        # (0, 3, 4) whose unit version is (0, 0.6, 0.8)
        out = fit(np.array([[0.0], [3.0], [4.0]]),
                  DesignMatrix(np.array([[1.0], [0.0], [0.0]]), ("x",)))
        np.testing.assert_allclose(out.residuals[:, 0], [0.0, 3.0, 4.0])
        rs = normalized_residuals(out)
        np.testing.assert_allclose(rs.u[:, 0], [0.0, 0.6, 0.8])
        assert rs.norms[0] == pytest.approx(5.0)

    def test_zero_residuals_flagged(self):
        out = fit(np.array([[2.0], [2.0], [2.0]]), ones_design(3))
        rs = normalized_residuals(out)
        assert rs.flagged[0]
        np.testing.assert_array_equal(rs.u[:, 0], 0.0)

    def test_unit_norm_property(self):
        rng = np.random.default_rng(12)
        out = fit(rng.standard_normal((10, 500)), ones_design(10))
        rs = normalized_residuals(out)
        norms = np.sqrt((rs.u ** 2).sum(axis=0))
        np.testing.assert_allclose(norms[~rs.flagged], 1.0, atol=1e-10)


class TestZEquivalent:
    def test_paper_table_values(self):
        ft12 = FieldType.student_t(12)
        ft11 = FieldType.student_t(11)
        assert z_equivalent(StatField(np.array([8.71]), ft12))[0] == \
            pytest.approx(4.80, abs=0.02)
        assert z_equivalent(StatField(np.array([6.86]), ft12))[0] == \
            pytest.approx(4.29, abs=0.02)
        assert z_equivalent(StatField(np.array([9.05]), ft11))[0] == \
            pytest.approx(4.75, abs=0.02)

    def test_zero_and_symmetry(self):
        ft = FieldType.student_t(7)
        z = z_equivalent(StatField(np.array([-3.0, 0.0, 3.0]), ft))
        assert z[1] == pytest.approx(0.0, abs=1e-12)
        assert z[0] == pytest.approx(-z[2], abs=1e-12)

    def test_strictly_increasing(self):
        t = np.linspace(-6, 6, 101)
        z = z_equivalent(StatField(t, FieldType.student_t(9)))
        assert np.all(np.diff(z) > 0)

    def test_large_dof_limit(self):
        t = np.linspace(0.0, 5.0, 26)
        z = z_equivalent(StatField(t, FieldType.student_t(1e6)))
        assert np.abs(z - t).max() < 1e-3

    def test_gaussian_passthrough(self):
        t = np.array([-1.0, 0.5, 4.0])
        np.testing.assert_array_equal(
            z_equivalent(StatField(t, FieldType.gaussian())), t)

    def test_far_tail_stability(self):
        # oracle: 80-digit incomplete-beta tail inverted against the
        # Gaussian tail with mpmath gives z = 36.2118033151
        z = z_equivalent(StatField(np.array([80.0]), FieldType.student_t(500)))
        assert z[0] == pytest.approx(36.2118033151, abs=1e-6)
