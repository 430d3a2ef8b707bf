import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedkit.coordinator import RoundPlan
from fedkit.dataplane import SiloSpec, table_counts, synth_silo
from fedkit.fedwire import (
    ConfigPush,
    Finish,
    Register,
    TrainResult,
    WeightsDown,
    decode,
    encode,
    in_process_pair,
)
from fedkit.nncore import (
    ArchitectureSpec,
    OptimizerConfig,
    ResidualClassifier,
    build_model,
)
from fedkit.trainer import (
    NodeProfile,
    client_loop,
    derive_client_seed,
    local_train,
    raspberry_profile,
    reference_profiles,
    steps_per_epoch,
    train_rounds_locally,
)

ARCH = ArchitectureSpec(input_size=8, num_classes=4, stages=((1, 4),))


@pytest.fixture(scope="module")
def silo():
    spec = SiloSpec("probe", table_counts(8, 8, 8, 8), augmentation_factor=2,
                    train_fraction=0.8, input_size=8)
    return synth_silo(spec, seed=21)


class TestProfiles:
    def test_raspberry_preset_bundles_mitigations(self):
        p = raspberry_profile("edge")
        assert (p.epochs_per_round, p.batch_size, p.train_fraction) == (3, 2, 0.4)
        assert p.device_class == "raspberry"

    def test_reference_profiles_match_measured_speeds(self):
        speeds = {cid: p.speed_iters_per_s for cid, p in reference_profiles().items()}
        assert speeds == {
            "spain": 15.6, "malawi": 0.3, "egypt": 2.5,
            "uganda": 0.57, "ghana": 0.67, "algeria": 0.79,
        }

    def test_invalid_profiles_rejected(self):
        with pytest.raises(ValueError):
            NodeProfile("x", epochs_per_round=0).validate()
        with pytest.raises(ValueError):
            NodeProfile("x", batch_size=0).validate()
        with pytest.raises(ValueError):
            NodeProfile("x", train_fraction=1.5).validate()


class TestLocalTrain:
    def test_step_count_law(self, silo):
        # Raspberry-style: 3 epochs x ceil(n/2) steps; n is the train split size
        profile = NodeProfile("probe", epochs_per_round=3, batch_size=2,
                              train_fraction=0.8, speed_iters_per_s=1.0)
        model = ResidualClassifier(ARCH)
        opt = OptimizerConfig(learning_rate=0.01).make_state()
        weights = build_model(ARCH, seed=1)
        result = local_train(model, weights, silo, profile, opt, seed=5, round_num=1)
        n_k = len(silo.splits.train)
        assert result.sample_count == n_k
        expected_steps = 3 * steps_per_epoch(n_k, 2)
        measured_steps = result.metrics.iterations_per_second * result.metrics.wall_time_s
        assert measured_steps == pytest.approx(expected_steps, rel=1e-6)
        assert len(result.metrics.epoch_losses) == 3

    def test_malawi_row_step_count(self):
        # 240 train samples, batch 2, 3 epochs -> exactly 360 optimizer steps
        assert 3 * steps_per_epoch(240, 2) == 360

    @given(
        epochs=st.integers(min_value=1, max_value=5),
        batch=st.integers(min_value=1, max_value=16),
        n=st.integers(min_value=1, max_value=200),
    )
    @settings(max_examples=100, deadline=None)
    def test_step_count_formula_property(self, epochs, batch, n):
        # ceil division law the timing model builds on
        assert epochs * steps_per_epoch(n, batch) == epochs * ((n + batch - 1) // batch)

    def test_deterministic_for_fixed_inputs(self, silo):
        profile = NodeProfile("probe", epochs_per_round=2, batch_size=4, train_fraction=0.8)
        model = ResidualClassifier(ARCH)
        weights = build_model(ARCH, seed=1)
        outs = []
        for _ in range(2):
            opt = OptimizerConfig(learning_rate=0.01).make_state()
            res = local_train(model, weights, silo, profile, opt, seed=5, round_num=1)
            outs.append(res)
        assert outs[0].weights == outs[1].weights
        assert outs[0].metrics.epoch_losses == outs[1].metrics.epoch_losses

    def test_round_number_changes_shuffles(self, silo):
        profile = NodeProfile("probe", epochs_per_round=1, batch_size=4, train_fraction=0.8)
        model = ResidualClassifier(ARCH)
        weights = build_model(ARCH, seed=1)
        res = []
        for round_num in (1, 2):
            opt = OptimizerConfig(learning_rate=0.01).make_state()
            res.append(local_train(model, weights, silo, profile, opt, seed=5, round_num=round_num))
        assert res[0].weights != res[1].weights

    def test_train_rounds_equals_consecutive_calls(self, silo):
        profile = NodeProfile("probe", epochs_per_round=2, batch_size=4, train_fraction=0.8)
        model = ResidualClassifier(ARCH)
        weights = build_model(ARCH, seed=1)
        opt_a = OptimizerConfig(learning_rate=0.01).make_state()
        wa, _ = train_rounds_locally(model, weights, silo, profile, opt_a, seed=5, rounds=3)
        opt_b = OptimizerConfig(learning_rate=0.01).make_state()
        wb = weights
        for r in (1, 2, 3):
            wb = local_train(model, wb, silo, profile, opt_b, seed=5, round_num=r).weights
        assert wa == wb


class FrameTap:
    """Wraps a connection, recording every encoded frame it sends."""

    def __init__(self, inner):
        self.inner = inner
        self.sent_frames: list[bytes] = []

    def send(self, msg):
        self.sent_frames.append(encode(msg))
        self.inner.send(msg)

    def recv(self, timeout=None):
        return self.inner.recv(timeout)

    def close(self):
        self.inner.close()


def run_scripted_coordinator(conn, arch, profile, rounds, plan=None):
    """Drive one client through `rounds` rounds, then Finish."""
    plan = plan or RoundPlan(total_rounds=max(rounds, 1), round_timeout_s=30.0,
                             optimizer=OptimizerConfig(learning_rate=0.01))
    reg = conn.recv(timeout=10.0)
    assert isinstance(reg, Register)
    conn.send(ConfigPush(profile=profile, arch=arch, plan=plan))
    weights = build_model(arch, seed=2)
    received = []
    for r in range(1, rounds + 1):
        conn.send(WeightsDown(round_num=r, weights=weights))
        result = conn.recv(timeout=60.0)
        assert isinstance(result, TrainResult)
        received.append(result)
        weights = result.weights
    conn.send(Finish(reason="scripted-complete"))
    return received


class TestClientLoop:
    def _profile(self):
        return NodeProfile("edge", epochs_per_round=1, batch_size=4,
                           train_fraction=0.8, speed_iters_per_s=1.0)

    def test_two_round_session(self, silo):
        server_side, client_side = in_process_pair()
        results = {}

        def serve():
            results["rounds"] = run_scripted_coordinator(server_side, ARCH, self._profile(), rounds=2)

        t = threading.Thread(target=serve, daemon=True)
        t.start()
        outcome = client_loop(client_side, silo, "edge", seed=9)
        t.join(timeout=30.0)
        assert outcome.rounds_completed == 2
        assert outcome.finish_reason == "finish:scripted-complete"
        assert [r.round_num for r in results["rounds"]] == [1, 2]
        assert all(r.sample_count == len(silo.splits.train) for r in results["rounds"])

    def test_finish_before_any_round(self, silo):
        server_side, client_side = in_process_pair()

        def serve():
            run_scripted_coordinator(server_side, ARCH, self._profile(), rounds=0)

        t = threading.Thread(target=serve, daemon=True)
        t.start()
        outcome = client_loop(client_side, silo, "edge", seed=9)
        t.join(timeout=30.0)
        assert outcome.rounds_completed == 0
        assert outcome.last_weights is None
        assert outcome.finish_reason.startswith("finish")

    def test_connection_loss_is_clean_shutdown(self, silo):
        server_side, client_side = in_process_pair()

        def serve():
            reg = server_side.recv(timeout=10.0)
            server_side.send(ConfigPush(profile=self._profile(), arch=ARCH,
                                        plan=RoundPlan(total_rounds=5, optimizer=OptimizerConfig(learning_rate=0.01))))
            server_side.send(WeightsDown(round_num=1, weights=build_model(ARCH, seed=2)))
            server_side.recv(timeout=60.0)
            server_side.close()  # vanish mid-session

        t = threading.Thread(target=serve, daemon=True)
        t.start()
        outcome = client_loop(client_side, silo, "edge", seed=9)
        t.join(timeout=30.0)
        assert outcome.finish_reason == "connection_lost"
        assert outcome.rounds_completed == 1
        assert outcome.last_weights is not None  # persisted for post-mortem

    def test_no_raw_samples_on_the_wire(self, silo):
        server_side, client_side = in_process_pair()
        tap = FrameTap(client_side)

        def serve():
            run_scripted_coordinator(server_side, ARCH, self._profile(), rounds=2)

        t = threading.Thread(target=serve, daemon=True)
        t.start()
        client_loop(tap, silo, "edge", seed=9)
        t.join(timeout=30.0)

        manifest_names = set(build_model(ARCH, seed=0).names)
        train_images, _ = silo.split_view("train")
        sample_bytes = {train_images[i].tobytes() for i in range(0, 8)}
        for frame in tap.sent_frames:
            msg, _ = decode(frame)
            assert isinstance(msg, (Register, TrainResult))
            if isinstance(msg, TrainResult):
                # outbound tensors are exactly the model manifest, nothing else
                assert set(msg.weights.names) == manifest_names
            for blob in sample_bytes:
                assert blob not in frame

    def test_seed_derivation_stable(self):
        assert derive_client_seed(7, "malawi") == derive_client_seed(7, "malawi")
        assert derive_client_seed(7, "malawi") != derive_client_seed(8, "malawi")
        assert derive_client_seed(7, "malawi") != derive_client_seed(7, "ghana")
