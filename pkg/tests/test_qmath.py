import numpy as np
import pytest

from tinyeats.core import qmath
from tinyeats.core.errors import AccumulatorOverflowError, FixedPointRangeError, SignalError
from tinyeats.core.rng import XorShift64Star


class TestConversion:
    def test_known_values(self):
        assert qmath.q15_from_real(0.5) == 16384
        assert qmath.q15_from_real(1.0) == 32767
        assert qmath.q15_from_real(-1.0) == -32768
        assert qmath.q15_from_real(0.0) == 0

    def test_round_half_away_from_zero(self):
        assert qmath.q15_from_real(1.5 / 32768) == 2
        assert qmath.q15_from_real(-1.5 / 32768) == -2

    def test_round_trip_bound(self):
        x = np.random.default_rng(0).uniform(-1.0, 32767 / 32768, 10000)
        q = qmath.q15_from_real(x)
        assert np.max(np.abs(x - q / 32768)) <= 2.0**-16

    def test_non_finite_rejected(self):
        with pytest.raises(SignalError):
            qmath.q15_from_real(np.array([0.0, np.nan]))


class TestMultiply:
    def test_examples(self):
        assert qmath.q15_mul(16384, 16384) == 8192
        assert qmath.q15_mul(12345, 0) == 0
        assert qmath.q15_mul(-32768, -32768) == 32767

    def test_commutative_and_monotone(self):
        rng = np.random.default_rng(1)
        a = rng.integers(-32767, 32768, 2000)
        b = rng.integers(-32767, 32768, 2000)
        np.testing.assert_array_equal(qmath.q15_mul(a, b), qmath.q15_mul(b, a))
        fixed = np.full(2000, 20000)
        ordered = np.sort(a)
        assert np.all(np.diff(qmath.q15_mul(ordered, fixed)) >= 0)

    def test_sat_add_clamps(self):
        assert qmath.sat_add(30000, 30000) == 32767
        assert qmath.sat_add(-30000, -30000) == -32768


class TestSoftsign:
    def test_examples(self):
        assert qmath.softsign_q(0) == 0
        assert qmath.softsign_q(32768) == 16384
        assert qmath.softsign_q(98304) == 24576
        assert qmath.shifted_softsign_q(0) == 16384
        assert qmath.shifted_softsign_q(98304) == 28672
        assert qmath.shifted_softsign_q(-98304) == 4096

    def test_error_bound_and_symmetry(self):
        centers = np.array([0, 32768, -32768, 98304, -98304], dtype=np.int64)
        neighbours = (centers[:, None] + np.arange(-1, 2)).ravel()
        x = np.concatenate([np.arange(-(1 << 20), (1 << 20) + 1, 20, dtype=np.int64), neighbours])
        assert x.size >= 100_000
        s = qmath.softsign_q(x)
        real = x / (32768.0 + np.abs(x))
        assert np.max(np.abs(s / 32768.0 - real)) <= 2.0**-14
        np.testing.assert_array_equal(qmath.softsign_q(-x), -s)
        pair = qmath.shifted_softsign_q(x) + qmath.shifted_softsign_q(-x)
        assert set(np.unique(pair)) <= {32767, 32768}

    def test_gate_range(self):
        x = np.array([-(1 << 30) + 1, -1, 0, 1, (1 << 30) - 1])
        g = qmath.shifted_softsign_q(x)
        assert g.min() >= 0 and g.max() <= 32767

    def test_overflow_rejected(self):
        with pytest.raises(AccumulatorOverflowError):
            qmath.softsign_q(1 << 30)

    def test_unchecked_matches_checked(self):
        x = np.random.default_rng(2).integers(-(1 << 29), 1 << 29, 5000)
        np.testing.assert_array_equal(qmath.softsign_unchecked(x), qmath.softsign_q(x))


class TestRescale:
    def test_examples(self):
        assert qmath.rescale(1000, 1 << 30, 30) == 1000
        assert qmath.rescale(3, 1 << 30, 31) == 2
        assert qmath.rescale(-3, 1 << 30, 31) == -2

    def test_matches_float_oracle(self):
        rng = np.random.default_rng(3)
        acc = rng.integers(-(1 << 31), 1 << 31, 100000)
        mantissa = rng.integers(1 << 30, 1 << 31, 100000)
        shift = rng.integers(20, 45, 100000)
        out = qmath.rescale(acc, mantissa, shift)
        expected = acc * (mantissa / 2.0**shift)
        assert np.max(np.abs(out - expected)) <= 1.0

    def test_unchecked_matches_checked(self):
        rng = np.random.default_rng(4)
        acc = rng.integers(-(1 << 31), 1 << 31, 5000)
        mult = rng.integers(1 << 29, 1 << 31, 5000)
        shift = rng.integers(1, 40, 5000)
        half = np.left_shift(1, shift - 1)
        np.testing.assert_array_equal(
            qmath.rescale_unchecked(acc, mult, shift, half), qmath.rescale(acc, mult, shift)
        )

    @pytest.mark.parametrize(
        "acc,mult,shift",
        [(1, 1 << 28, 10), (1, 1 << 31, 10), (1, 1 << 30, 63), (1, 1 << 30, -1), (1 << 31, 1 << 30, 10)],
    )
    def test_out_of_range(self, acc, mult, shift):
        with pytest.raises(FixedPointRangeError):
            qmath.rescale(acc, mult, shift)


class TestRng:
    def test_deterministic(self):
        a, b = XorShift64Star(9), XorShift64Star(9)
        assert [a.next_u64() for _ in range(5)] == [b.next_u64() for _ in range(5)]

    def test_permutation(self):
        perm = XorShift64Star(5).permutation(50)
        assert sorted(perm) == list(range(50))
        assert perm != list(range(50))

    def test_uniform_bounds(self):
        values = XorShift64Star(1).uniform(-0.25, 0.25, (40, 40))
        assert values.shape == (40, 40)
        assert values.min() >= -0.25 and values.max() < 0.25
