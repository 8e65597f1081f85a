import numpy as np
import pytest

from qsq.codec import (
    ContainerError,
    EncodedLayer,
    EncodedModel,
    decode_code,
    decode_code_fixed,
    decode_codes,
    decode_layer,
    decode_model,
    encode_codes,
    encode_layer,
    encode_model,
    passthrough_layer,
    read_container,
    serialize_model,
    write_container,
)
from qsq.quantize import QuantConfig
from qsq.tensors import GroupingMode, LayerDims, WeightTensor

WORD_TABLE_3 = {0b000: 0, 0b001: 1, 0b010: 2, 0b011: 4, 0b100: -1, 0b101: -2, 0b110: -4}
WORD_TABLE_2 = {0b00: 0, 0b01: 1, 0b10: -1}


def pack_reference(codes, bit_width):
    """Independent LSB-first bit writer."""
    table = WORD_TABLE_3 if bit_width == 3 else WORD_TABLE_2
    word_of = {lvl: word for word, lvl in table.items()}
    out = bytearray()
    acc = 0
    nbits = 0
    for code in codes:
        acc |= word_of[int(code)] << nbits
        nbits += bit_width
        while nbits >= 8:
            out.append(acc & 0xFF)
            acc >>= 8
            nbits -= 8
    if nbits:
        out.append(acc & 0xFF)
    return bytes(out)


class TestCodeTable:
    @pytest.mark.parametrize("word,level", sorted(WORD_TABLE_3.items()))
    def test_three_bit_bijection(self, word, level):
        packed = encode_codes([level], 3)
        assert decode_codes(packed, 1, 3).tolist() == [level]
        assert decode_code(word, 1.0) == level

    @pytest.mark.parametrize("word,level", sorted(WORD_TABLE_2.items()))
    def test_two_bit_bijection(self, word, level):
        packed = encode_codes([level], 2)
        assert decode_codes(packed, 1, 2).tolist() == [level]


class TestEncodeCodes:
    def test_known_bytes(self):
        assert encode_codes([1, 2, 4], 3) == bytes([0xD1, 0x00])

    def test_zero_codes_two_bit(self):
        assert encode_codes([0, 0, 0, 0], 2) == bytes([0x00])

    def test_wide_code_rejected_in_two_bits(self):
        with pytest.raises(ValueError, match="not encodable"):
            encode_codes([4], 2)

    def test_level_three_rejected(self):
        with pytest.raises(ValueError, match="not encodable"):
            encode_codes([3], 3)

    def test_empty(self):
        assert encode_codes([], 3) == b""
        assert decode_codes(b"", 0, 3).size == 0

    @pytest.mark.parametrize("bit_width,levels", [(3, [0, 1, 2, 4, -1, -2, -4]), (2, [0, 1, -1])])
    def test_matches_reference_writer(self, bit_width, levels):
        rng = np.random.default_rng(21)
        for _ in range(200):
            codes = rng.choice(levels, size=rng.integers(0, 40))
            packed = encode_codes(codes, bit_width)
            assert packed == pack_reference(codes, bit_width)
            assert decode_codes(packed, codes.size, bit_width).tolist() == codes.tolist()

    def test_padding_bits_are_zero(self):
        packed = encode_codes([4, 4, 4], 3)  # 9 bits -> 2 bytes, 7 pad bits
        assert len(packed) == 2
        assert packed[1] >> 1 == 0

    def test_nonzero_padding_rejected_on_decode(self):
        packed = bytearray(encode_codes([1, 1, 1], 3))
        packed[-1] |= 0x80
        with pytest.raises(ContainerError, match="padding"):
            decode_codes(bytes(packed), 3, 3)

    def test_reserved_word_rejected_on_decode(self):
        with pytest.raises(ContainerError, match="reserved"):
            decode_codes(bytes([0b111]), 1, 3)
        with pytest.raises(ContainerError, match="reserved"):
            decode_codes(bytes([0b11]), 1, 2)

    def test_truncated_stream_rejected(self):
        with pytest.raises(ContainerError, match="truncated"):
            decode_codes(b"\x00", 3, 3)


class TestDecodeCode:
    def test_shift_left_once(self):
        assert decode_code(0b010, 0.25) == 0.5

    def test_zero_word_skips_scalar(self):
        for alpha in (0.0, 1.0, -3.5, 1e30):
            assert decode_code(0b000, alpha) == 0.0

    def test_negate_and_double_twice(self):
        assert decode_code(0b110, 0.25) == -1.0

    def test_reserved_raises(self):
        with pytest.raises(ValueError, match="reserved"):
            decode_code(0b111, 1.0)

    def test_out_of_range_word(self):
        with pytest.raises(ValueError):
            decode_code(8, 1.0)

    def test_linearity(self):
        rng = np.random.default_rng(22)
        for _ in range(100):
            alpha = float(rng.normal())
            c = float(rng.normal())
            for word in WORD_TABLE_3:
                assert decode_code(word, c * alpha) == pytest.approx(c * decode_code(word, alpha), abs=1e-300, rel=1e-12)

    def test_equals_alpha_times_level(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            alpha = float(np.float32(rng.normal(scale=0.3)))
            for word, level in WORD_TABLE_3.items():
                assert decode_code(word, alpha) == alpha * level


class TestDecodeCodeFixed:
    def test_agrees_with_real_path(self):
        rng = np.random.default_rng(24)
        frac = 16
        for _ in range(500):
            alpha_q = int(rng.integers(0, 1 << 24))  # 4*alpha_q fits 32 bits
            alpha = alpha_q / (1 << frac)
            for word in WORD_TABLE_3:
                got = decode_code_fixed(word, alpha_q, width=32)
                assert got / (1 << frac) == decode_code(word, alpha)

    def test_shift_overflow_raises(self):
        with pytest.raises(OverflowError):
            decode_code_fixed(0b011, 1 << 30, width=32)  # doubled twice leaves range

    def test_scalar_must_fit_width(self):
        with pytest.raises(OverflowError):
            decode_code_fixed(0b001, 1 << 40, width=32)

    def test_negate_is_twos_complement(self):
        assert decode_code_fixed(0b100, 5, width=8) == -5
        assert decode_code_fixed(0b101, 5, width=8) == -10
        assert decode_code_fixed(0b110, 5, width=8) == -20


def random_encoded_model(rng):
    layers = []
    used = set()
    for _ in range(rng.integers(0, 4)):
        name = f"layer{rng.integers(0, 1000)}-α"
        if name in used:
            continue
        used.add(name)
        dims = LayerDims(*(int(v) for v in rng.integers(1, 4, size=4)))
        if rng.random() < 0.3:
            values = rng.normal(size=dims.count).astype(np.float32)
            layers.append(passthrough_layer(WeightTensor(name, dims, values, "dense")))
        else:
            phi = int(rng.choice([1, 2, 4]))
            bw = 2 if phi == 1 else 3
            kind = rng.choice(["channel", "filter", "flat"])
            grouping = GroupingMode.flat(int(rng.integers(1, 6))) if kind == "flat" else GroupingMode(kind)
            t = WeightTensor(name, dims, rng.normal(size=dims.count).astype(np.float32))
            layers.append(encode_layer(t, QuantConfig(phi=phi, grouping=grouping), bw))
    return EncodedModel(layers)


class TestContainer:
    def test_empty_model_is_header_only(self, tmp_path):
        path = tmp_path / "empty.qsq"
        n = write_container(EncodedModel([]), path)
        assert n == 16
        assert path.stat().st_size == 16
        model = read_container(path)
        assert model.layers == []

    def test_round_trip_one_layer(self, tmp_path):
        rng = np.random.default_rng(25)
        t = WeightTensor("conv1", LayerDims(2, 3, 2, 2), rng.normal(size=24).astype(np.float32))
        m = EncodedModel([encode_layer(t, QuantConfig(phi=4))])
        path = tmp_path / "one.qsq"
        write_container(m, path)
        back = read_container(path)
        assert serialize_model(back) == serialize_model(m)
        e0, e1 = m.layers[0], back.layers[0]
        assert e0.name == e1.name and e0.dims == e1.dims
        np.testing.assert_array_equal(e0.scalars, e1.scalars)
        assert e0.packed_codes == e1.packed_codes

    def test_serialization_is_deterministic(self):
        rng = np.random.default_rng(26)
        m = random_encoded_model(rng)
        assert serialize_model(m) == serialize_model(m)

    def test_many_random_round_trips(self, tmp_path):
        rng = np.random.default_rng(27)
        path = tmp_path / "model.qsq"
        for _ in range(100):
            m = random_encoded_model(rng)
            write_container(m, path)
            back = read_container(path)
            assert serialize_model(back) == serialize_model(m)

    def test_corrupt_magic(self, tmp_path):
        path = tmp_path / "bad.qsq"
        write_container(EncodedModel([]), path)
        data = bytearray(path.read_bytes())
        data[0] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(ContainerError, match="magic"):
            read_container(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "bad.qsq"
        write_container(EncodedModel([]), path)
        data = bytearray(path.read_bytes())
        data[4] = 9
        path.write_bytes(bytes(data))
        with pytest.raises(ContainerError, match="version"):
            read_container(path)

    def test_truncated_stream(self, tmp_path):
        rng = np.random.default_rng(28)
        t = WeightTensor("w", LayerDims(2, 2, 2, 2), rng.normal(size=16).astype(np.float32))
        path = tmp_path / "trunc.qsq"
        write_container(EncodedModel([encode_layer(t, QuantConfig(phi=4))]), path)
        data = path.read_bytes()
        path.write_bytes(data[:-3])
        with pytest.raises(ContainerError, match="truncated"):
            read_container(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "extra.qsq"
        write_container(EncodedModel([]), path)
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(ContainerError, match="trailing"):
            read_container(path)

    def test_nonzero_padding_in_file(self, tmp_path):
        t = WeightTensor("w", LayerDims(1, 1, 1, 3), [0.5, -0.5, 0.25])
        m = EncodedModel([encode_layer(t, QuantConfig(phi=4, grouping=GroupingMode.flat(3)))])
        path = tmp_path / "pad.qsq"
        write_container(m, path)
        data = bytearray(path.read_bytes())
        data[-1] |= 0x80  # 9 code bits, so the top bit of the last byte is padding
        path.write_bytes(bytes(data))
        with pytest.raises(ContainerError, match="padding"):
            read_container(path)


class TestDecodeLayer:
    def test_decoded_values_are_alpha_times_code(self):
        rng = np.random.default_rng(29)
        for grouping in (GroupingMode.channel_wise(), GroupingMode.filter_wise(), GroupingMode.flat(5)):
            t = WeightTensor("w", LayerDims(3, 4, 2, 2), rng.normal(size=48).astype(np.float32))
            cfg = QuantConfig(phi=4, grouping=grouping)
            e = encode_layer(t, cfg)
            back = decode_layer(e)

            from qsq.quantize import quantize_slices
            from qsq.tensors import extract_vectors

            slices = extract_vectors(t, grouping)
            quantized = quantize_slices(slices, cfg)
            want = np.empty(t.dims.count, dtype=np.float32)
            for s, q in zip(slices, quantized):
                want[s.origin] = np.float32(np.float32(q.alpha) * q.codes.astype(np.float32))
            np.testing.assert_array_equal(back.values.reshape(-1), want)

    def test_nearest_small_vector(self):
        t = WeightTensor("w", LayerDims(1, 1, 1, 2), [0.5, 1.0])
        cfg = QuantConfig(phi=4, mode="nearest", grouping=GroupingMode.flat(2))
        e = encode_layer(t, cfg)
        assert e.scalars.tolist() == [0.1875]
        back = decode_layer(e)
        assert back.values.reshape(-1).tolist() == [0.375, 0.75]

    def test_all_zero_layer(self):
        t = WeightTensor("w", LayerDims(2, 2, 1, 1), np.zeros(4))
        e = encode_layer(t, QuantConfig(phi=1), bit_width=2)
        back = decode_layer(e)
        assert not back.values.any()

    def test_scalar_count_mismatch(self):
        t = WeightTensor("w", LayerDims(2, 2, 1, 1), np.ones(4))
        e = encode_layer(t, QuantConfig(phi=4))
        e.scalars = e.scalars[:-1]
        with pytest.raises(ValueError, match="scalars"):
            decode_layer(e)

    def test_passthrough_round_trip(self):
        rng = np.random.default_rng(30)
        t = WeightTensor("fc", LayerDims(4, 5, 1, 1), rng.normal(size=20).astype(np.float32), "dense")
        back = decode_layer(passthrough_layer(t))
        assert back.kind == "dense"
        np.testing.assert_array_equal(back.values, t.values)


class TestEncodeModel:
    def test_dense_passthrough_by_default(self):
        rng = np.random.default_rng(31)
        model = [
            WeightTensor("c", LayerDims(2, 3, 2, 2), rng.normal(size=24).astype(np.float32)),
            WeightTensor("d", LayerDims(3, 4, 1, 1), rng.normal(size=12).astype(np.float32), "dense"),
        ]
        em = encode_model(model, QuantConfig(phi=4))
        assert not em.layers[0].passthrough
        assert em.layers[1].passthrough
        decoded = decode_model(em)
        np.testing.assert_array_equal(decoded[1].values, model[1].values)

    def test_include_dense_quantizes_with_flat_fallback(self):
        rng = np.random.default_rng(32)
        model = [WeightTensor("d", LayerDims(3, 4, 1, 1), rng.normal(size=12).astype(np.float32), "dense")]
        em = encode_model(model, QuantConfig(phi=4, grouping=GroupingMode.channel_wise()), include_dense=True)
        e = em.layers[0]
        assert not e.passthrough
        assert e.grouping.kind == "flat" and e.n == 4

    def test_duplicate_names_rejected(self):
        t = WeightTensor("w", LayerDims(1, 1, 1, 1), [1.0])
        with pytest.raises(ValueError, match="duplicate"):
            EncodedModel([passthrough_layer(t), passthrough_layer(t)])
