import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emr.ann import (Activations, EepromError, FROZEN_THRESHOLD, GeometryError,
                     IMAGE_MAGIC, NetGeometry, PARTIAL_MARKER, TRAIN_SIGMOID,
                     TrainingSet, WeightMatrix, adc_to_bits, backward_pass,
                     bits_to_distance, classify_all, deserialize_weights,
                     forward_pass, generate_training_data, image_is_partial,
                     image_size, infer_distance, init_weights,
                     serialize_weights, synthesize_weights, train)
from emr.sensor import SensorSpec, get_sensor

GP2Y = SensorSpec("GP2Y0A02YK", 20, 150, "analog", v_at_min=2.75, v_at_max=0.4)


def xor_set() -> TrainingSet:
    inputs = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], np.uint8)
    targets = np.array([[0], [1], [1], [0]], np.uint8)
    return TrainingSet(inputs=inputs, targets=targets,
                       classes=targets[:, 0].astype(np.uint16))


class TestGeometry:
    def test_adc_default(self):
        g = NetGeometry.for_adc()
        assert g.widths == (10, 16, 8)
        assert g.layer_count == 3
        assert g.nmax == g.wmax == 16

    def test_too_few_layers(self):
        with pytest.raises(GeometryError):
            NetGeometry((10,))

    def test_non_adc_widths_allowed_generally(self):
        NetGeometry((2, 4, 1))

    def test_adc_check(self):
        with pytest.raises(GeometryError):
            NetGeometry((2, 4, 1)).check_adc()


class TestTrainingData:
    TS = generate_training_data(GP2Y)

    def test_partition_of_all_codes(self):
        assert sum(self.TS.class_counts.values()) == 1024
        assert self.TS.inputs.shape == (1024, 10)
        assert self.TS.targets.shape == (1024, 8)

    def test_class_zero_is_largest(self):
        counts = self.TS.class_counts
        zero = counts[0]
        assert zero == max(counts.values())
        assert all(zero > c for cls, c in counts.items() if cls)

    def test_near_range_classes_hold_more_codes(self):
        counts = self.TS.class_counts
        near = np.mean([counts.get(d, 0) for d in range(20, 40)])
        far = np.mean([counts.get(d, 0) for d in range(130, 151)])
        assert near > far

    def test_classes_monotone_in_decoded_voltage(self):
        # voltage descends as code descends; distance classes must not decrease
        valid = [int(c) for c in self.TS.classes if c]
        descending_codes = [int(c) for c in self.TS.classes[::-1] if c]
        assert descending_codes == sorted(valid)

    def test_targets_encode_classes(self):
        for code in (0, 100, 300, 500, 1023):
            bits = self.TS.targets[code]
            assert bits_to_distance(bits) == self.TS.classes[code]

    def test_one_bit_sensor_rejected(self):
        switch = SensorSpec("GP2D05", 10, 80, "digital-1bit")
        with pytest.raises(GeometryError):
            generate_training_data(switch)

    def test_fractional_resolution_rejected(self):
        with pytest.raises(ValueError):
            generate_training_data(GP2Y, resolution=0.5)


class TestBitCoding:
    def test_adc_bits_msb_first(self):
        assert list(adc_to_bits(512)) == [1, 0, 0, 0, 0, 0, 0, 0, 0, 0]
        assert list(adc_to_bits(1)) == [0] * 9 + [1]

    def test_distance_bits_msb_first(self):
        assert bits_to_distance([1, 0, 0, 0, 0, 0, 0, 0]) == 128
        assert bits_to_distance([0] * 7 + [1]) == 1

    def test_code_out_of_range(self):
        with pytest.raises(ValueError):
            adc_to_bits(1024)


class TestForwardPass:
    def test_all_zero_weights_frozen_gives_zeros(self):
        g = NetGeometry((10, 16, 8))
        w = WeightMatrix(g, np.zeros((2, 16, 16), np.float32))
        out, _ = forward_pass(w, adc_to_bits(777), FROZEN_THRESHOLD)
        assert list(out) == [0] * 8

    def test_identity_subnet_passes_bit_through(self):
        g = NetGeometry((2, 2))
        w = WeightMatrix(g, np.eye(2, dtype=np.float32)[None, :, :])
        out, _ = forward_pass(w, [1, 0], FROZEN_THRESHOLD)
        assert list(out) == [1, 0]
        out, _ = forward_pass(w, [0, 1], FROZEN_THRESHOLD)
        assert list(out) == [0, 1]

    def test_frozen_output_is_binary(self):
        g = NetGeometry((10, 16, 8))
        w = init_weights(g, seed=3)
        for code in (0, 511, 1023):
            out, _ = forward_pass(w, adc_to_bits(code), FROZEN_THRESHOLD)
            assert set(np.unique(out)) <= {0.0, 1.0}

    def test_sigmoid_outputs_in_unit_interval(self):
        g = NetGeometry((10, 16, 8))
        w = init_weights(g, seed=3)
        out, acts = forward_pass(w, adc_to_bits(700), TRAIN_SIGMOID)
        assert np.all((out > 0) & (out < 1))
        assert np.all((acts.o >= 0) & (acts.o <= 1))

    def test_threshold_margin_invariance(self):
        # perturbations smaller than the margin to 0.5 cannot flip frozen outputs
        g = NetGeometry((2, 2))
        w = WeightMatrix(g, np.array([[[0.9, 0.0], [0.0, 0.2]]], np.float32))
        base, _ = forward_pass(w, [1, 1], FROZEN_THRESHOLD)
        w2 = w.copy()
        w2.w += 0.05  # margins are 0.4 and 0.3
        bumped, _ = forward_pass(w2, [1, 1], FROZEN_THRESHOLD)
        assert list(base) == list(bumped)

    def test_input_shape_checked(self):
        g = NetGeometry((10, 16, 8))
        w = init_weights(g, seed=0)
        with pytest.raises(GeometryError):
            forward_pass(w, [1, 0, 1])


class TestBackwardPass:
    def test_zero_update_when_target_equals_output(self):
        g = NetGeometry((2, 3, 2))
        w = init_weights(g, seed=5)
        out, acts = forward_pass(w, [1, 0], TRAIN_SIGMOID)
        before = w.w.copy()
        backward_pass(w, acts, out, eta=1.0)
        assert np.array_equal(w.w, before)

    def test_single_connection_hand_value(self):
        g = NetGeometry((1, 1))
        w = WeightMatrix(g, np.zeros((1, 1, 1), np.float32))
        acts = Activations.zeros(g)
        o_prev = 0.8
        acts.o[0, 0] = o_prev
        acts.o[1, 0] = 0.5
        backward_pass(w, acts, [1.0], eta=1.0)
        # delta = 0.5*0.5*0.5 = 0.125, weight increment 0.125*o_prev
        assert w.w[0, 0, 0] == pytest.approx(0.125 * o_prev, rel=1e-6)

    def test_update_linear_in_eta(self):
        g = NetGeometry((2, 3, 2))
        base = init_weights(g, seed=11)
        out, acts = forward_pass(base, [1, 1], TRAIN_SIGMOID)
        target = [1.0, 0.0]
        w_full = base.copy()
        backward_pass(w_full, acts, target, eta=1.0)
        out2, acts2 = forward_pass(base, [1, 1], TRAIN_SIGMOID)
        w_half = base.copy()
        backward_pass(w_half, acts2, target, eta=0.5)
        full_step = w_full.w[1] - base.w[1]
        half_step = w_half.w[1] - base.w[1]
        assert np.allclose(half_step, full_step / 2, rtol=1e-5, atol=1e-8)

    def test_geometry_mismatch_rejected(self):
        g = NetGeometry((2, 3, 2))
        w = init_weights(g, seed=0)
        _, acts = forward_pass(w, [1, 0], TRAIN_SIGMOID)
        with pytest.raises(GeometryError):
            backward_pass(w, acts, [1.0, 0.0, 1.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_output_layer_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        g = NetGeometry((2, 3, 2))
        w = init_weights(g, seed=seed)
        x = rng.uniform(0, 1, 2)
        t = rng.uniform(0, 1, 2)

        def loss(wf):
            o = x.astype(np.float64)
            for L in range(g.layer_count - 1):
                wi, wo = g.widths[L], g.widths[L + 1]
                o = 1.0 / (1.0 + np.exp(-(wf[L][:wo, :wi] @ o)))
            return 0.5 * np.sum((t - o) ** 2)

        _, acts = forward_pass(w, x, TRAIN_SIGMOID)
        updated = w.copy()
        backward_pass(updated, acts, t, eta=1.0)
        analytic = updated.w - w.w
        h = 1e-5
        for n in range(2):
            for c in range(3):
                wp = w.w.astype(np.float64).copy()
                wm = w.w.astype(np.float64).copy()
                wp[1, n, c] += h
                wm[1, n, c] -= h
                numeric = -(loss(wp) - loss(wm)) / (2 * h)
                assert analytic[1, n, c] == pytest.approx(numeric, rel=1e-4, abs=1e-9)


class TestTrain:
    def test_two_bit_parity_learnable(self):
        w, hist = train(xor_set(), NetGeometry((2, 4, 1)), eta=0.5,
                        epochs=10000, seed=0)
        assert hist[-1] == 0
        assert len(hist) <= 10000
        for bits, target in ((np.array([0, 0]), 0), (np.array([0, 1]), 1),
                             (np.array([1, 0]), 1), (np.array([1, 1]), 0)):
            out, _ = forward_pass(w, bits, FROZEN_THRESHOLD)
            assert out[0] == target

    def test_zero_epochs_rejected(self):
        with pytest.raises(ValueError):
            train(xor_set(), NetGeometry((2, 4, 1)), epochs=0)

    def test_same_seed_bit_identical(self):
        w1, h1 = train(xor_set(), NetGeometry((2, 4, 1)), eta=0.5, epochs=500, seed=9)
        w2, h2 = train(xor_set(), NetGeometry((2, 4, 1)), eta=0.5, epochs=500, seed=9)
        assert np.array_equal(w1.w, w2.w)
        assert h1 == h2

    def test_kernel_matches_reference_passes(self):
        # one epoch through the compiled kernel vs the numpy forward/backward
        ts = xor_set()
        g = NetGeometry((2, 4, 1))
        kernel_w, _ = train(ts, g, eta=0.5, epochs=1, seed=4)
        ref = init_weights(g, seed=4)
        acts = Activations.zeros(g)
        for p in range(len(ts.inputs)):
            forward_pass(ref, ts.inputs[p], TRAIN_SIGMOID, acts)
            backward_pass(ref, acts, ts.targets[p].astype(np.float32), eta=0.5)
        assert np.allclose(kernel_w.w, ref.w, rtol=1e-5, atol=1e-7)

    def test_geometry_set_mismatch_rejected(self):
        with pytest.raises(GeometryError):
            train(xor_set(), NetGeometry((10, 16, 8)), epochs=1)


class TestImage:
    def test_round_trip_identity(self):
        w = init_weights(NetGeometry((10, 16, 8)), seed=21, sensor_model="GP2Y0A02YK")
        back = deserialize_weights(serialize_weights(w))
        assert np.array_equal(back.w, w.w)
        assert back.geometry == w.geometry
        assert back.sensor_model == "GP2Y0A02YK"

    def test_documented_size_for_default_geometry(self):
        g = NetGeometry((10, 16, 8))
        image = serialize_weights(init_weights(g, seed=0))
        # 19 header bytes + one width byte per layer + 4 bytes per padded slot
        expected = 19 + 3 + 4 * (3 - 1) * 16 * 16
        assert len(image) == expected == 2070 == image_size(g)

    def test_bad_magic(self):
        with pytest.raises(EepromError, match="magic"):
            deserialize_weights(b"NOPE" + bytes(100))

    def test_truncated_image(self):
        image = serialize_weights(init_weights(NetGeometry((10, 16, 8)), seed=0))
        with pytest.raises(EepromError):
            deserialize_weights(image[:40])

    def test_capacity_enforced(self):
        g = NetGeometry((10, 64, 64, 8))
        with pytest.raises(EepromError, match="32768"):
            serialize_weights(init_weights(g, seed=0))

    def test_partial_marker_round_trip(self):
        w = init_weights(NetGeometry((10, 16, 8)), seed=2)
        image = serialize_weights(w) + bytes((PARTIAL_MARKER,))
        assert image_is_partial(image)
        back = deserialize_weights(image)
        assert np.array_equal(back.w, w.w)
        assert not image_is_partial(serialize_weights(w))

    def test_name_too_long_rejected(self):
        w = init_weights(NetGeometry((10, 16, 8)), seed=0,
                         sensor_model="MUCHTOOLONGNAME")
        with pytest.raises(EepromError, match="11"):
            serialize_weights(w)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(1, 12), min_size=2, max_size=4), st.integers(0, 2**31))
    def test_round_trip_random_geometries(self, widths, seed):
        g = NetGeometry(tuple(widths))
        w = init_weights(g, seed=seed, sensor_model="X")
        back = deserialize_weights(serialize_weights(w))
        assert np.array_equal(back.w, w.w)
        assert back.geometry.widths == g.widths

    def test_magic_bytes(self):
        image = serialize_weights(init_weights(NetGeometry((2, 2)), seed=0))
        assert image[:4] == IMAGE_MAGIC == b"EMRW"


class TestInfer:
    GP2D120 = get_sensor("GP2D120")

    def test_synthesized_converter_is_exact(self):
        ts = generate_training_data(self.GP2D120)
        w = synthesize_weights(self.GP2D120)
        assert np.array_equal(classify_all(w), ts.classes)

    def test_class_zero_code_gives_zero(self):
        w = synthesize_weights(self.GP2D120)
        assert infer_distance(w, 0) == 0
        assert infer_distance(w, 1023) == 0

    def test_output_always_a_byte(self):
        w = init_weights(NetGeometry((10, 16, 8)), seed=1)
        for code in range(0, 1024, 37):
            assert 0 <= infer_distance(w, code) <= 255

    def test_infer_requires_adc_geometry(self):
        w = init_weights(NetGeometry((2, 4, 1)), seed=0)
        with pytest.raises(GeometryError):
            infer_distance(w, 3)

    def test_synthesized_long_range_converter_at_coarse_resolution(self):
        spec = get_sensor("GP2Y0A02YK")
        ts = generate_training_data(spec, resolution=3.0)
        w = synthesize_weights(spec, resolution=3.0)
        assert np.array_equal(classify_all(w), ts.classes)
        # the 1 cm long-range staircase does not fit the storage part
        with pytest.raises(EepromError):
            serialize_weights(synthesize_weights(spec, resolution=1.0))
