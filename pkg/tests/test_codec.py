"""Sequence codec: container layout, GOP structure, partial decoding, loss simulation, stats."""
import csv
import io
import json
import struct
import zlib

import numpy as np
import pytest

from hiervc.codec import (
    INTER,
    INTRA,
    Chunk,
    Container,
    DecodeOptions,
    FrameRecord,
    LossModel,
    SequenceHeader,
    decode_sequence,
    drop_chunks,
    encode_sequence,
    format_report,
    lambda_index,
    rate_report,
    simulate_loss,
    truncate_container,
)
from hiervc.codec.stats import FIELDS
from hiervc.errors import ConfigurationError, FormatError, InputError, TruncationError
from hiervc.harness import SyntheticSpec, eval_clips, synth_generate
from hiervc.model import HierarchicalVideoModel, toy_config
from hiervc.numerics.checkpoint import load_model

from conftest import GOLDEN
from fixtures.make_golden import golden_clip

SIZE = 16


@pytest.fixture(scope="module")
def model():
    return HierarchicalVideoModel(toy_config(init_seed=11))


@pytest.fixture(scope="module")
def clip():
    return np.random.default_rng(4).random((6, 3, SIZE, SIZE))


@pytest.fixture(scope="module")
def encoded(model, clip):
    return encode_sequence(clip, model, gop_size=4)


class TestContainerFormat:
    def test_header_layout(self, encoded, model):
        data = encoded.container
        magic, ver, chash, w, h, n, gop, li, prec, ns = struct.unpack_from("<4sH32sIIIIBBB", data)
        assert (magic, ver, w, h, n, gop, li, prec, ns) == (b"HVCS", 1, SIZE, SIZE, 6, 4, 2, 32, 4)
        assert chash == model.cfg.config_hash()

    def test_first_record_layout(self, encoded):
        off = 57
        ftype, presence, count = struct.unpack_from("<BHB", encoded.container, off)
        assert (ftype, presence, count) == (INTRA, 0b1111, 4)
        scale, length, crc = struct.unpack_from("<BII", encoded.container, off + 4)
        payload = encoded.container[off + 13: off + 13 + length]
        assert scale == 0 and zlib.crc32(payload) == crc
        assert encoded.stats.frames[0].scales[0].bits == 8 * length

    def test_pack_unpack_identity(self, encoded):
        assert Container.unpack(encoded.container).pack() == encoded.container

    def test_rejects_garbage(self, encoded):
        with pytest.raises(FormatError):
            Container.unpack(b"JUNK" + encoded.container[4:])
        with pytest.raises(FormatError):
            Container.unpack(encoded.container + b"\0")
        with pytest.raises(TruncationError):
            Container.unpack(encoded.container[:-1])
        with pytest.raises(TruncationError):
            Container.unpack(encoded.container[:30])

    def test_header_validation(self):
        with pytest.raises(ConfigurationError):
            SequenceHeader(b"\0" * 32, 16, 16, 1, 0, 4)
        assert lambda_index(1024) == 2 and lambda_index(300) == 255

    def test_chunk_order_enforced(self):
        rec = FrameRecord(INTRA, [Chunk(1, b"ab"), Chunk(0, b"cd")])
        with pytest.raises(FormatError):
            rec.pack()


class TestEncodeDecode:
    def test_closed_loop(self, model, clip, encoded):
        dec = decode_sequence(encoded.container, model)
        assert np.max(np.abs(dec.frames - encoded.reconstructions)) == 0.0
        assert dec.frames.shape == clip.shape

    def test_deterministic(self, model, clip, encoded):
        assert encode_sequence(clip, model, gop_size=4).container == encoded.container

    def test_stats_use_actual_bytes(self, encoded):
        c = Container.unpack(encoded.container)
        for fs, rec in zip(encoded.stats.frames, c.frames):
            assert [s.bits for s in fs.scales] == [8 * len(ch.payload) for ch in rec.chunks]

    def test_gop_structure(self, model):
        frames = np.random.default_rng(0).random((96, 3, SIZE, SIZE))
        res = encode_sequence(frames, model, gop_size=32)
        intra = [fs.frame for fs in res.stats.frames if fs.frame_type == "intra"]
        assert intra == [0, 32, 64]
        types = [r.frame_type for r in Container.unpack(res.container).frames]
        assert [t for t, ft in enumerate(types) if ft == INTRA] == [0, 32, 64]

    def test_gop_boundary_resets_context(self, model):
        rng = np.random.default_rng(8)
        a, b = rng.random((4, 3, SIZE, SIZE)), rng.random((4, 3, SIZE, SIZE))
        joined = encode_sequence(np.concatenate([a, b]), model, gop_size=4)
        alone = encode_sequence(b, model, gop_size=4)
        np.testing.assert_array_equal(joined.reconstructions[4:], alone.reconstructions)

    def test_single_frame(self, model, clip):
        res = encode_sequence(clip[:1], model)
        c = Container.unpack(res.container)
        assert len(c.frames) == 1 and c.frames[0].frame_type == INTRA
        np.testing.assert_array_equal(decode_sequence(res.container, model).frames, res.reconstructions)

    def test_empty_sequence(self, model):
        res = encode_sequence(np.zeros((0, 3, SIZE, SIZE)), model)
        assert rate_report(res.stats) == []
        assert decode_sequence(res.container, model).frames.shape == (0, 3, SIZE, SIZE)

    def test_padding_and_cropping(self, model):
        frames = np.random.default_rng(2).random((2, 3, 20, 13))
        res = encode_sequence(frames, model)
        dec = decode_sequence(res.container, model)
        assert dec.frames.shape == (2, 3, 20, 13)
        np.testing.assert_array_equal(dec.frames, res.reconstructions)

    def test_64bit_container(self, model, clip):
        res = encode_sequence(clip[:3], model, bits=64)
        assert Container.unpack(res.container).header.precision == 64
        dec = decode_sequence(res.container, model)
        assert dec.frames.dtype == np.float64
        assert np.max(np.abs(dec.frames - res.reconstructions)) == 0.0

    def test_dimension_mismatch(self, model):
        with pytest.raises(InputError):
            encode_sequence([np.zeros((3, 16, 16)), np.zeros((3, 32, 32))], model)

    def test_config_hash_refused(self, encoded):
        other = HierarchicalVideoModel(toy_config(init_seed=11, lmbda=256.0))
        with pytest.raises(ConfigurationError):
            decode_sequence(encoded.container, other)


class TestPartialDecoding:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_prefix_property(self, model, encoded, k):
        dec = decode_sequence(encoded.container, model, DecodeOptions(max_scales=k))
        trunc = decode_sequence(truncate_container(encoded.container, k), model)
        np.testing.assert_array_equal(dec.frames, trunc.frames)
        for fs in dec.stats.frames:
            assert [s.status for s in fs.scales[:k]] == ["decoded"] * k
            assert all(s.status == "not_requested" and s.bits == 0 for s in fs.scales[k:])

    def test_every_prefix_decodes(self, model, encoded):
        for k in range(0, 5):
            out = decode_sequence(truncate_container(encoded.container, k), model)
            assert np.all(np.isfinite(out.frames))

    def test_max_scales_range(self, model, encoded):
        for k in (0, 5):
            with pytest.raises(ConfigurationError):
                decode_sequence(encoded.container, model, DecodeOptions(max_scales=k))

    def test_all_dropped_still_emits(self, model, encoded):
        pattern = simulate_loss(encoded.container, LossModel("iid", 1.0), seed=0)
        assert sum(len(v) for v in pattern.values()) == 24
        dec = decode_sequence(encoded.container, model, DecodeOptions(drop_pattern=pattern))
        assert dec.frames.shape == (6, 3, SIZE, SIZE) and np.all(np.isfinite(dec.frames))
        assert all(s.dropped for fs in dec.stats.frames for s in fs.scales)
        stripped = decode_sequence(drop_chunks(encoded.container, pattern), model)
        np.testing.assert_array_equal(stripped.frames, dec.frames)

    def test_strict_marks_dependents_stale(self, model, encoded):
        dec = decode_sequence(encoded.container, model, DecodeOptions(drop_pattern={0: {1}}))
        st = [[s.status for s in fs.scales] for fs in dec.stats.frames]
        assert st[0] == ["decoded", "dropped", "stale", "stale"]
        # scale 0 of frame 1 only depends on exact scale-0 context
        assert st[1][0] == "decoded" and st[1][1] == "stale"
        # the next GOP starts clean
        assert st[4] == ["decoded"] * 4
        np.testing.assert_array_equal(dec.frames[4:], encoded.reconstructions[4:])

    def test_lenient_mode_decodes_everything_present(self, model, encoded):
        dec = decode_sequence(encoded.container, model,
                              DecodeOptions(drop_pattern={0: {1}}, strict_dependencies=False))
        assert all(s.status in ("decoded", "dropped") for fs in dec.stats.frames for s in fs.scales)
        assert np.all(np.isfinite(dec.frames))

    def test_corrupt_chunk_flagged(self, model, encoded):
        c = Container.unpack(encoded.container)
        ch = c.frames[1].chunks[2]
        ch.payload = bytes([ch.payload[0] ^ 0xFF]) + ch.payload[1:]
        dec = decode_sequence(c.pack(), model)
        fs = dec.stats.frames[1]
        assert fs.scales[2].status == "corrupt" and "crc" in fs.error
        assert np.all(np.isfinite(dec.frames))
        np.testing.assert_array_equal(dec.frames[0], encoded.reconstructions[0])

    def test_short_payload_with_valid_crc(self, model, encoded):
        c = Container.unpack(encoded.container)
        old = c.frames[2].chunks[3]
        c.frames[2].chunks[3] = Chunk(3, old.payload[:-4])
        dec = decode_sequence(c.pack(), model)
        assert dec.stats.frames[2].scales[3].status == "corrupt"
        assert dec.stats.frames[2].error


class TestLossModel:
    def test_zero_loss(self, encoded):
        assert simulate_loss(encoded.container, LossModel("iid", 0.0), 1) == {}
        assert simulate_loss(encoded.container, LossModel("burst", 0.0, 4), 1) == {}

    def test_iid_rate(self):
        frac = LossModel("iid", 0.1).sample(10_000, np.random.default_rng(0)).mean()
        assert abs(frac - 0.1) <= 0.01

    def test_burst_stationary_rate(self):
        # bursts correlate neighbouring packets, so average a few independent streams
        rates = [LossModel("burst", 0.1, 3).sample(10_000, np.random.default_rng(s)).mean() for s in range(5)]
        assert abs(np.mean(rates) - 0.1) <= 0.01

    def test_burst_lengths(self):
        m = LossModel("burst", 0.2, 5).sample(200_000, np.random.default_rng(0))
        edges = np.flatnonzero(np.diff(np.concatenate([[0], m.astype(int), [0]])))
        runs = edges[1::2] - edges[::2]
        assert runs.mean() == pytest.approx(5, rel=0.05)

    def test_deterministic_per_seed(self, encoded):
        a = simulate_loss(encoded.container, LossModel("iid", 0.5), 3)
        assert a == simulate_loss(encoded.container, LossModel("iid", 0.5), 3)

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            LossModel("iid", 1.5)
        with pytest.raises(ConfigurationError):
            LossModel("gauss", 0.1)


class TestStats:
    def test_report_percentages(self, encoded):
        rows = rate_report(encoded.stats)
        assert len(rows) == 24
        for t in range(6):
            fr = [r for r in rows if r["frame"] == t]
            assert sum(r["percent"] for r in fr) == pytest.approx(100.0, abs=0.01)
            assert sum(r["bits"] for r in fr) == encoded.stats.frames[t].bits
        text = format_report(rows)
        assert text.splitlines()[0] == "frame,frame_type,scale,bits,bpp,percent"

    def test_csv_fields(self, encoded):
        rows = list(csv.DictReader(io.StringIO(encoded.stats.to_csv())))
        assert tuple(rows[0]) == FIELDS == ("frame", "scale", "bits", "bpp", "psnr", "dropped")
        assert len(rows) == 24
        assert int(rows[5]["bits"]) == encoded.stats.frames[1].scales[1].bits

    def test_json(self, encoded, tmp_path):
        doc = json.loads(encoded.stats.to_json(tmp_path / "s.json"))
        assert set(FIELDS) <= set(doc["rows"][0])
        assert doc["summary"]["frames"] == 6
        assert json.loads((tmp_path / "s.json").read_text()) == doc


@pytest.fixture(scope="module")
def still():
    return synth_generate(SyntheticSpec("shift", 0, 16, 32, 32), seed=5)


class TestTrainedModel:
    """Directional behaviour of the trained fixture model on still content."""

    def test_inter_cheaper_than_repeated_intra(self, main_model, still):
        seq = encode_sequence(still, main_model, gop_size=16).stats
        intra_only = encode_sequence(still, main_model, gop_size=1).stats
        inter_bits = sum(f.bits for f in seq.frames[1:])
        assert inter_bits < sum(f.bits for f in intra_only.frames[1:])
        assert seq.frames[0].bpp > seq.mean_bpp("inter")

    def test_psnr_does_not_drift(self, main_model, still):
        seq = encode_sequence(still, main_model, gop_size=16).stats
        p = np.array([f.psnr for f in seq.frames])
        slope = np.polyfit(np.arange(p.size), p, 1)[0]
        assert abs(slope) < 0.1  # dB per frame

    def test_eval_clip_closed_loop(self, main_model):
        for clip in eval_clips(2, 4, 32, seed=777):
            enc = encode_sequence(clip, main_model, gop_size=4)
            dec = decode_sequence(enc.container, main_model)
            assert np.max(np.abs(dec.frames - enc.reconstructions)) == 0.0


class TestGolden:
    """Re-encoding the golden clip with the golden model reproduces the committed bytes."""

    def test_reencode_is_byte_identical(self):
        model = load_model(GOLDEN / "model.hvck")
        enc = encode_sequence(golden_clip(), model, gop_size=2)
        assert enc.container == (GOLDEN / "clip.hvcs").read_bytes()
        assert len(enc.container) == json.loads((GOLDEN / "meta.json").read_text())["container_bytes"]
