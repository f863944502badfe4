import numpy as np
import pytest

from ldpfl.base.errors import ConfigurationError, InvalidInputError, ShapeError
from ldpfl.bitcodec import (
    CodecConfig,
    bits_to_features,
    decode_matrix,
    decode_value,
    decode_vector,
    encode_matrix,
    encode_value,
    encode_vector,
)


def bits(text: str) -> np.ndarray:
    return np.array([int(c) for c in text], dtype=np.uint8)


class TestCodecConfig:
    def test_length(self):
        assert CodecConfig(4, 5).l == 10
        assert CodecConfig(0, 0).l == 1

    def test_max_magnitude(self):
        assert CodecConfig(4, 5).max_magnitude == 16 - 1 / 32

    def test_rejects_negative(self):
        with pytest.raises(ConfigurationError):
            CodecConfig(-1, 5)

    @pytest.mark.parametrize("m, n", [(30, 30), (40, 20), (0, 54)])
    def test_rejects_magnitudes_wider_than_float64(self, m, n):
        with pytest.raises(ConfigurationError):
            CodecConfig(m, n)

    @pytest.mark.parametrize("m, n", [(30, 23), (27, 26), (53, 0), (0, 53)])
    def test_widest_configs_saturate(self, m, n):
        cfg = CodecConfig(m, n)
        assert decode_value(encode_value(1e300, cfg), cfg) == cfg.max_magnitude
        assert decode_value(encode_value(-1e300, cfg), cfg) == -cfg.max_magnitude
        np.testing.assert_array_equal(encode_value(1e300, cfg)[1:], np.ones(m + n))


class TestEncodeValue:
    def test_zero(self, codec):
        np.testing.assert_array_equal(encode_value(0.0, codec), bits("0000000000"))

    def test_two_and_a_half(self, codec):
        np.testing.assert_array_equal(encode_value(2.5, codec), bits("0" "0010" "10000"))

    def test_negative(self, codec):
        np.testing.assert_array_equal(encode_value(-1.25, codec), bits("1" "0001" "01000"))

    def test_truncates_toward_zero(self, codec):
        # 0.05 * 32 = 1.6, kept as 1
        np.testing.assert_array_equal(encode_value(0.05, codec), bits("0" "0000" "00001"))

    def test_saturates(self, codec):
        np.testing.assert_array_equal(encode_value(1e6, codec), bits("0" "1111" "11111"))
        np.testing.assert_array_equal(encode_value(-1e6, codec), bits("1" "1111" "11111"))

    @pytest.mark.parametrize("value", [np.nan, np.inf, -np.inf])
    def test_rejects_non_finite(self, codec, value):
        with pytest.raises(InvalidInputError):
            encode_value(value, codec)


class TestDecodeValue:
    def test_zero(self, codec):
        assert decode_value(bits("0000000000"), codec) == 0.0

    def test_exact_roundtrip(self, codec):
        assert decode_value(encode_value(2.5, codec), codec) == 2.5

    def test_quantization_bound(self, codec):
        assert abs(decode_value(encode_value(0.01, codec), codec) - 0.01) <= 2**-5

    def test_wrong_length(self, codec):
        with pytest.raises(ShapeError):
            decode_value(bits("000"), codec)


class TestVectors:
    def test_zeros(self, codec):
        np.testing.assert_array_equal(encode_vector([0.0, 0.0], codec), np.zeros(20))

    def test_concatenation(self, codec):
        expected = np.concatenate([encode_value(2.5, codec), encode_value(-1.25, codec)])
        np.testing.assert_array_equal(encode_vector([2.5, -1.25], codec), expected)

    def test_large_vector(self, codec):
        assert encode_vector(np.zeros(1024), codec).shape == (10240,)

    def test_decode(self, codec):
        np.testing.assert_array_equal(decode_vector(np.zeros(20, dtype=np.uint8), codec), [0.0, 0.0])
        np.testing.assert_array_equal(
            decode_vector(encode_vector([2.5, -1.25], codec), codec), [2.5, -1.25]
        )

    def test_decode_length(self, codec, rng):
        b = rng.integers(0, 2, size=70)
        assert decode_vector(b, codec).shape == (7,)

    def test_decode_misaligned(self, codec):
        with pytest.raises(ShapeError):
            decode_vector(np.zeros(15, dtype=np.uint8), codec)

    def test_empty_vector(self, codec):
        with pytest.raises(InvalidInputError):
            encode_vector([], codec)

    def test_matrix_rows_match_vectors(self, codec, rng):
        values = rng.uniform(-20, 20, size=(5, 3))
        encoded = encode_matrix(values, codec)
        for row, v in zip(encoded, values):
            np.testing.assert_array_equal(row, encode_vector(v, codec))


class TestRoundtripProperty:
    @pytest.mark.parametrize("m, n", [(4, 5), (2, 2), (8, 8)])
    def test_bound_and_saturation(self, m, n):
        cfg = CodecConfig(m, n)
        rng = np.random.default_rng(m * 100 + n)
        x = rng.uniform(-2 * 2.0**m, 2 * 2.0**m, size=(1000, 100))
        decoded = decode_matrix(encode_matrix(x, cfg), cfg)

        inside = np.abs(x) <= cfg.max_magnitude
        assert np.all(np.abs(decoded[inside] - x[inside]) <= 2.0**-n)
        np.testing.assert_array_equal(
            decoded[~inside], np.sign(x[~inside]) * cfg.max_magnitude
        )


class TestBitsToFeatures:
    def test_values(self):
        np.testing.assert_array_equal(bits_to_features(bits("101")), [1.0, 0.0, 1.0])

    def test_zeros(self):
        np.testing.assert_array_equal(bits_to_features(np.zeros(6, dtype=np.uint8)), np.zeros(6))

    def test_length(self, rng):
        b = rng.integers(0, 2, size=33)
        assert bits_to_features(b).shape == (33,)

    def test_rejects_non_bits(self):
        with pytest.raises(InvalidInputError):
            bits_to_features(np.array([0, 2, 1]))
