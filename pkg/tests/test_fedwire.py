import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedkit.coordinator import RoundPlan
from fedkit.fedwire import (
    MAGIC,
    ClientMetrics,
    ConfigPush,
    CorruptFrameError,
    EvalResult,
    Finish,
    IncompleteFrameError,
    ProtocolError,
    Register,
    TrainResult,
    WeightsDown,
    decode,
    decode_weights,
    encode,
    encode_weights,
    load_weights,
    save_weights,
)
from fedkit.nncore import ArchitectureSpec, ModelWeights, OptimizerConfig, build_model
from fedkit.trainer import NodeProfile

TINY_ARCH = ArchitectureSpec(input_size=8, num_classes=2, stages=((1, 4),))


def random_weights(rng: np.random.Generator, max_tensors=4, max_dim=5) -> ModelWeights:
    n = int(rng.integers(1, max_tensors + 1))
    entries = []
    for i in range(n):
        rank = int(rng.integers(1, 4))
        shape = tuple(int(d) for d in rng.integers(1, max_dim + 1, size=rank))
        entries.append((f"t{i}", rng.standard_normal(shape).astype(np.float32)))
    return ModelWeights(entries)


def random_message(rng: np.random.Generator):
    kind = int(rng.integers(0, 6))
    if kind == 0:
        return Register(client_id=f"client{rng.integers(0, 100)}", profile_summary="cpu:E=10")
    if kind == 1:
        profile = NodeProfile(
            client_id=f"c{rng.integers(0, 10)}",
            epochs_per_round=int(rng.integers(1, 12)),
            batch_size=int(rng.integers(1, 16)),
            train_fraction=float(rng.uniform(0.1, 1.0)),
            device_class=str(rng.choice(["gpu", "cpu", "raspberry"])),
            speed_iters_per_s=float(rng.uniform(0.1, 20.0)),
        )
        plan = RoundPlan(
            total_rounds=int(rng.integers(1, 30)),
            round_timeout_s=None if rng.random() < 0.5 else float(rng.uniform(1, 100)),
            optimizer=OptimizerConfig(
                learning_rate=float(rng.uniform(1e-4, 0.1)),
                max_grad_norm=None if rng.random() < 0.5 else float(rng.uniform(0.5, 10.0)),
            ),
        )
        return ConfigPush(profile=profile, arch=TINY_ARCH, plan=plan)
    if kind == 2:
        return WeightsDown(round_num=int(rng.integers(0, 21)), weights=random_weights(rng))
    if kind == 3:
        metrics = ClientMetrics(
            iterations_per_second=float(rng.uniform(0, 20)),
            epoch_losses=tuple(float(x) for x in rng.uniform(0, 3, size=rng.integers(0, 5))),
            wall_time_s=float(rng.uniform(0, 100)),
        )
        return TrainResult(
            round_num=int(rng.integers(0, 21)),
            weights=random_weights(rng),
            sample_count=int(rng.integers(1, 10_000)),
            metrics=metrics,
        )
    if kind == 4:
        return EvalResult(round_num=int(rng.integers(0, 21)),
                          accuracy=float(rng.uniform(0, 1)), loss=float(rng.uniform(0, 3)))
    return Finish(reason=str(rng.choice(["complete", "aborted", "done"])))


class TestCodecRoundTrip:
    def test_many_random_messages_bit_exact(self):
        rng = np.random.default_rng(1234)
        for _ in range(2000):
            msg = random_message(rng)
            frame = encode(msg)
            decoded, consumed = decode(frame)
            assert consumed == len(frame)
            assert encode(decoded) == frame

    def test_weights_payload_preserves_bits(self):
        w = build_model(TINY_ARCH, seed=9)
        frame = encode(WeightsDown(round_num=1, weights=w))
        decoded, _ = decode(frame)
        assert decoded.weights.tobytes() == w.tobytes()
        assert decoded.weights.manifest_hash == w.manifest_hash

    def test_train_step_output_roundtrips_bit_exactly(self):
        from fedkit.nncore import OptimizerState, ResidualClassifier, train_step

        model = ResidualClassifier(TINY_ARCH)
        rng = np.random.default_rng(6)
        weights, _ = train_step(
            model,
            build_model(TINY_ARCH, seed=9),
            rng.uniform(0, 1, size=(4, 8, 8)).astype(np.float32),
            rng.integers(0, 2, size=4),
            OptimizerState(learning_rate=0.05, momentum=0.9),
        )
        decoded, _ = decode(encode(WeightsDown(round_num=1, weights=weights)))
        assert decoded.weights.tobytes() == weights.tobytes()

    def test_frame_starts_with_magic(self):
        assert encode(Finish(reason="done"))[:4] == b"FEDW" == MAGIC

    def test_2x3_tensor_payload_layout(self):
        arr = np.arange(6, dtype=np.float32).reshape(2, 3)
        w = ModelWeights([("m", arr)])
        frame = encode(WeightsDown(round_num=0, weights=w))
        # dims 2,3 little-endian u32 followed by exactly 24 raw float bytes
        dims = np.array([2, 3], dtype="<u4").tobytes()
        idx = frame.index(dims)
        assert frame[idx + 8 : idx + 8 + 24] == arr.astype("<f4").tobytes()

    def test_train_result_with_malawi_sample_count(self):
        msg = TrainResult(
            round_num=5,
            weights=build_model(TINY_ARCH, seed=0),
            sample_count=240,
            metrics=ClientMetrics(0.3, (1.0, 0.9, 0.8), 1200.0),
        )
        decoded, _ = decode(encode(msg))
        assert decoded.sample_count == 240
        assert decoded.metrics.epoch_losses == (1.0, 0.9, 0.8)

    @given(data=st.data())
    @settings(max_examples=80, deadline=None)
    def test_roundtrip_property(self, data):
        seed = data.draw(st.integers(min_value=0, max_value=2**32 - 1))
        msg = random_message(np.random.default_rng(seed))
        frame = encode(msg)
        decoded, consumed = decode(frame)
        assert consumed == len(frame)
        assert encode(decoded) == frame


class TestCodecFaults:
    def setup_method(self):
        self.frame = encode(WeightsDown(round_num=2, weights=build_model(TINY_ARCH, seed=1)))

    def test_payload_bitflip_detected(self):
        for offset in (20, len(self.frame) // 2, len(self.frame) - 6):
            corrupted = bytearray(self.frame)
            corrupted[offset] ^= 0x01
            with pytest.raises(CorruptFrameError):
                decode(bytes(corrupted))

    def test_bad_magic(self):
        bad = b"NOPE" + self.frame[4:]
        with pytest.raises(ProtocolError):
            decode(bad)

    def test_unknown_version_names_both(self):
        bad = bytearray(self.frame)
        bad[4:6] = (999).to_bytes(2, "little")
        with pytest.raises(ProtocolError) as err:
            decode(bytes(bad))
        assert "999" in str(err.value) and "1" in str(err.value)

    def test_truncation_signals_incomplete(self):
        for cut in (0, 3, 14, 15, len(self.frame) - 1):
            with pytest.raises(IncompleteFrameError):
                decode(self.frame[:cut])

    def test_oversized_frame_rejected(self):
        with pytest.raises(ProtocolError):
            decode(self.frame, max_frame_bytes=16)

    def test_unknown_tag(self):
        bad = bytearray(self.frame)
        bad[6] = 99
        with pytest.raises(ProtocolError):
            decode(bytes(bad))

    def test_trailing_garbage_in_payload(self):
        # Re-frame a valid payload with one spare byte and a fixed-up CRC.
        import struct
        import zlib

        payload = encode_weights(build_model(TINY_ARCH, seed=1)) + b"\x00"
        header = struct.pack("<4sHBQ", b"FEDW", 1, 3, len(payload))
        frame = header + payload + struct.pack("<I", zlib.crc32(payload))
        with pytest.raises(CorruptFrameError):
            decode(frame)


class TestWeightsFile:
    def test_save_load_bit_exact(self, tmp_path):
        w = build_model(TINY_ARCH, seed=3)
        path = tmp_path / "model.weights"
        save_weights(w, path)
        loaded = load_weights(path)
        assert loaded == w

    def test_non_weights_file_rejected(self, tmp_path):
        path = tmp_path / "bogus.weights"
        path.write_bytes(b"not a weights file at all")
        with pytest.raises(ProtocolError):
            load_weights(path)

    def test_payload_helpers_roundtrip(self):
        w = build_model(TINY_ARCH, seed=4)
        assert decode_weights(encode_weights(w)) == w
