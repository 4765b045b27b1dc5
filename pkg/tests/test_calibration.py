import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kroncal.calibration import (
    LinearCalibration,
    MotorConversion,
    angle_to_pulse,
    assemble_design,
    identify,
    invert_calibration,
    join_parameters,
    numerical_rank,
    predict,
    pulse_to_angle,
    residual_stats,
    row_block,
    split_parameters,
)
from kroncal.exceptions import IdentifiabilityError, InputError, InversionError
from kroncal.simulator import PHYSICAL_BOUNDS, simulate_measure, table1_plant

from conftest import kron_predict

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


class TestRowBlock:
    def test_zero_input_has_only_bias_ones(self):
        B = row_block([0.0, 0.0, 0.0])
        assert B.shape == (3, 12)
        expected = np.zeros((3, 12))
        expected[0, 9] = expected[1, 10] = expected[2, 11] = 1.0
        np.testing.assert_array_equal(B, expected)

    def test_unit_pitch_input(self):
        B = row_block([1.0, 0.0, 0.0])
        nz = set(zip(*np.nonzero(B)))
        assert nz == {(0, 9), (1, 10), (2, 11), (0, 0), (1, 3), (2, 6)}

    def test_matches_kronecker_oracle(self, rng):
        for _ in range(50):
            u, x = rng.normal(size=3), rng.normal(size=12)
            np.testing.assert_allclose(row_block(u) @ x, kron_predict(x, u), rtol=0, atol=1e-12)

    @pytest.mark.parametrize("bad", [[np.nan, 0, 0], [0, np.inf, 0], [1, 2]])
    def test_rejects_bad_input(self, bad):
        with pytest.raises(InputError):
            row_block(bad)


class TestAssembleDesign:
    def test_single_posture_equals_block(self):
        u = [0.3, -0.2, 0.9]
        np.testing.assert_array_equal(assemble_design([u]), row_block(u))

    def test_four_postures_square(self, rng):
        assert assemble_design(rng.random((4, 3))).shape == (12, 12)

    def test_identical_postures_rank_three(self):
        assert numerical_rank(assemble_design(np.tile([0.2, 0.5, 0.7], (4, 1)))) == 3

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            assemble_design(np.zeros((0, 3)))

    def test_block_pattern(self, rng):
        U = rng.random((5, 3))
        A = assemble_design(U)
        for n, u in enumerate(U):
            for r in range(3):
                row = A[3 * n + r]
                np.testing.assert_array_equal(row[3 * r:3 * r + 3], u)
                assert row[9 + r] == 1.0
                assert np.count_nonzero(row) == np.count_nonzero(u) + 1


@settings(max_examples=200, deadline=None)
@given(arrays(float, (3, 3), elements=finite), arrays(float, 3, elements=finite))
def test_kronecker_identity(x_a, u):
    # vec(X_A u) = (I3 (x) u^T) vec(X_A), row-major vec
    lhs = x_a @ u
    rhs = np.kron(np.eye(3), u[None, :]) @ x_a.reshape(-1)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-9)
    block = row_block(u)[:, :9]
    np.testing.assert_allclose(block @ x_a.reshape(-1), lhs, rtol=1e-12, atol=1e-9)


class TestIdentify:
    def test_identity_plant(self, rng):
        U = rng.random((4, 3))
        x = identify(U, U)
        np.testing.assert_allclose(x, [1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0], atol=1e-10)

    def test_table1_plant_noiseless(self, rng, table1):
        U = rng.random((50, 3))
        x = identify(U, simulate_measure(table1, U))
        x_a, x_b = split_parameters(x)
        np.testing.assert_allclose(np.diag(x_a), [0.43, 0.71, 0.87], atol=1e-10)
        np.testing.assert_allclose(x_b, [3.1, -5.8, 2.41], atol=1e-10)
        np.testing.assert_allclose(x_a - np.diag(np.diag(x_a)), 0, atol=1e-10)

    def test_three_postures_underdetermined(self, rng):
        U = rng.random((3, 3))
        with pytest.raises(IdentifiabilityError) as err:
            identify(U, U)
        assert err.value.rank == 9

    def test_duplicates_rank_deficient(self, rng):
        U = np.vstack([rng.random((3, 3)), rng.random((3, 3))[:1]])
        U[3] = U[0]
        with pytest.raises(IdentifiabilityError, match="rank 9"):
            identify(U, U)

    def test_length_mismatch(self, rng):
        with pytest.raises(InputError, match="mismatch"):
            identify(rng.random((5, 3)), rng.random((4, 3)))

    def test_matches_normal_equations(self, rng):
        U = rng.random((20, 3))
        Y = rng.normal(size=(20, 3))
        A = assemble_design(U)
        oracle = np.linalg.inv(A.T @ A) @ A.T @ Y.reshape(-1)
        np.testing.assert_allclose(identify(U, Y), oracle, rtol=1e-9, atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(4, 30))
    def test_exact_recovery(self, seed, n):
        r = np.random.default_rng(seed)
        U = r.uniform(-1, 1, size=(n, 3))
        x = r.normal(size=12)
        if numerical_rank(assemble_design(U)) < 12 or np.linalg.cond(assemble_design(U)) > 1e6:
            return
        np.testing.assert_allclose(identify(U, predict(x, U)), x, rtol=0, atol=1e-9)

    def test_noise_consistency(self, rng):
        sigma, n, seeds = 0.01, 30, 100
        U = rng.random((n, 3))
        x_true = rng.normal(size=12)
        A = assemble_design(U)
        est = np.array([identify(U, predict(x_true, U) + np.random.default_rng(s).normal(0, sigma, (n, 3)))
                        for s in range(seeds)])
        se = sigma * np.sqrt(np.diag(np.linalg.inv(A.T @ A))) / np.sqrt(seeds)
        assert np.all(np.abs(est.mean(axis=0) - x_true) < 4 * se)


class TestPredict:
    def test_identity(self):
        x = join_parameters(np.eye(3), np.zeros(3))
        np.testing.assert_array_equal(predict(x, [5, -3, 2]), [5, -3, 2])

    def test_bias_only(self):
        x = np.zeros(12)
        x[11] = -5.8
        np.testing.assert_array_equal(predict(x, [0, 0, 0]), [0, 0, -5.8])

    def test_matches_row_block(self, rng):
        for _ in range(50):
            x, u = rng.normal(size=12), rng.normal(size=3)
            np.testing.assert_allclose(predict(x, u), row_block(u) @ x, atol=1e-12)

    def test_batch_shape(self, rng):
        assert predict(rng.normal(size=12), rng.random((7, 3))).shape == (7, 3)

    @settings(max_examples=100, deadline=None)
    @given(arrays(float, 12, elements=st.floats(-10, 10)), arrays(float, 3, elements=st.floats(-10, 10)),
           arrays(float, 3, elements=st.floats(-10, 10)), st.floats(-5, 5), st.floats(-5, 5))
    def test_affine_linearity(self, x, u1, u2, a, b):
        lhs = predict(x, a * u1 + b * u2)
        rhs = a * predict(x, u1) + b * predict(x, u2) - (a + b - 1) * x[9:]
        np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(lhs).max()))


class TestInvert:
    def test_identity(self):
        x = join_parameters(np.eye(3), np.zeros(3))
        np.testing.assert_allclose(invert_calibration(x, [1, 2, 3]), [1, 2, 3])

    def test_bias_target_gives_zero(self, table1):
        x = table1.parameters
        np.testing.assert_allclose(invert_calibration(x, x[9:]), 0, atol=1e-14)

    def test_round_trip(self, rng):
        for _ in range(100):
            x_a = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
            if np.linalg.cond(x_a) > 50:
                continue
            x = join_parameters(x_a, rng.normal(size=3))
            y = rng.normal(size=3) * 10
            np.testing.assert_allclose(predict(x, invert_calibration(x, y)), y, atol=1e-9)

    def test_singular_rejected(self):
        x = join_parameters(np.diag([1.0, 1.0, 0.0]), np.zeros(3))
        with pytest.raises(InversionError) as err:
            invert_calibration(x, [1, 1, 1])
        assert err.value.condition > 1e12

    def test_ill_conditioned_cap(self):
        x = join_parameters(np.diag([1.0, 1.0, 1e-7]), np.zeros(3))
        with pytest.raises(InversionError):
            invert_calibration(x, [1, 1, 1], cond_cap=1e6)
        invert_calibration(x, [1, 1, 1], cond_cap=1e8)


class TestResidualStats:
    def test_perfect_calibration(self, rng, table1):
        U = rng.random((50, 3))
        Y = simulate_measure(table1, U)
        stats = residual_stats(U, Y, table1.parameters)
        for s in stats.values():
            assert abs(s.median) < 1e-12 and s.iqr < 1e-12

    def test_uncalibrated_matches_analytic_error(self, rng, table1):
        b = np.asarray(PHYSICAL_BOUNDS)
        U = b[:, 0] + (b[:, 1] - b[:, 0]) * rng.random((20000, 3))
        stats = residual_stats(U, simulate_measure(table1, U))
        # e = (s - 1) u + bias with u symmetric about 0: median -> bias, IQR -> |s - 1| * range / 2
        for axis, scale, bias, (lo, hi) in zip(("pitch", "yaw", "roll"), (0.43, 0.71, 0.87),
                                              (3.1, -5.8, 2.41), PHYSICAL_BOUNDS):
            assert stats[axis].median == pytest.approx(bias, abs=0.3)
            assert stats[axis].iqr == pytest.approx((1 - scale) * (hi - lo) / 2, rel=0.03)
        # yaw carries the largest systematic offset
        assert max(stats, key=lambda a: abs(stats[a].median)) == "yaw"

    def test_identified_below_noise(self, rng):
        plant = table1_plant(noise_sigma=0.05)
        b = np.asarray(PHYSICAL_BOUNDS)
        U = b[:, 0] + (b[:, 1] - b[:, 0]) * rng.random((200, 3))
        Y = simulate_measure(plant, U, rng)
        stats = residual_stats(U, Y, identify(U, Y))
        for s in stats.values():
            assert s.median_abs < 0.05

    def test_length_mismatch(self, rng):
        with pytest.raises(InputError):
            residual_stats(rng.random((3, 3)), rng.random((4, 3)))


class TestPulses:
    conv = MotorConversion(1600, 10)

    def test_zero(self):
        assert pulse_to_angle(0, self.conv) == 0.0

    def test_one_revolution_of_motor(self):
        assert pulse_to_angle(1600, self.conv) == pytest.approx(36.0, abs=1e-12)

    def test_sign_preserved(self):
        assert pulse_to_angle(-800, self.conv) == pytest.approx(-18.0)

    def test_round_trip_sweep(self):
        p = np.arange(-10**6, 10**6 + 1)
        back, resid = angle_to_pulse(pulse_to_angle(p, self.conv), self.conv)
        np.testing.assert_array_equal(back, p)
        assert np.abs(resid).max() < 1e-9

    def test_ties_away_from_zero(self):
        half = self.conv.degrees_per_pulse / 2
        assert angle_to_pulse(half, self.conv)[0] == 1
        assert angle_to_pulse(-half, self.conv)[0] == -1
        assert angle_to_pulse(3 * half, self.conv)[0] == 2

    def test_residual_reported(self):
        p, r = angle_to_pulse(0.1, self.conv)
        assert p == 4 and r == pytest.approx(0.1 - 4 * 0.0225)

    @pytest.mark.parametrize("omega, kappa", [(0, 10), (1600, 0), (-1, 5), (np.inf, 1)])
    def test_invalid_conversion(self, omega, kappa):
        with pytest.raises(InputError):
            MotorConversion(omega, kappa)


class TestLinearCalibration:
    def test_fit_predict_invert(self, rng, table1):
        U = rng.random((30, 3))
        Y = simulate_measure(table1, U)
        est = LinearCalibration().fit(U, Y)
        np.testing.assert_allclose(est.coef_, table1.parameters, atol=1e-10)
        np.testing.assert_allclose(est.predict(U), Y, atol=1e-10)
        np.testing.assert_allclose(est.inverse_predict(Y), U, atol=1e-10)
        assert est.score(U, Y) == pytest.approx(1.0)
        assert np.isfinite(est.condition_number_)

    def test_sklearn_params_and_clone(self):
        from sklearn.base import clone
        est = LinearCalibration(rank_tol=1e-8)
        assert est.get_params() == {"rank_tol": 1e-8, "cond_cap": 1e12}
        assert clone(est).rank_tol == 1e-8

    def test_unfitted(self):
        from sklearn.exceptions import NotFittedError
        with pytest.raises(NotFittedError):
            LinearCalibration().predict(np.zeros((1, 3)))
