import numpy as np
import pytest

from bitfault.errors import EmptyDataset, InvalidFaultSite, ShapeMismatch
from bitfault.faults import EMPTY_PLAN, FaultPlan, FaultSite, RngSpec
from bitfault.campaigns import weight_fault_plan
from bitfault.multipliers import MultConfig, adam_mul, product_array
from bitfault.network import (
    Bounds,
    LayerSpec,
    QuantizedNetwork,
    clamp_unit,
    evaluate_accuracy,
    infer,
    profile_input_bounds,
    profile_ranges,
)


def tiny_model(backend=MultConfig("exact", 8), activation="none", protection="none"):
    layer = LayerSpec(
        name="L0", kind="dense", in_dim=2, out_dim=2, activation=activation,
        backend=backend, protection=protection,
    )
    return QuantizedNetwork(
        [layer],
        [np.array([[0.5, -0.25], [0.125, 0.5]])],
        [np.zeros(2)],
        bounds=[Bounds(-2.0, 2.0)],
        input_bounds=Bounds(-2.0, 2.0),
    )


class TestClampUnit:
    B = Bounds(0.0, 6.0)

    def test_m2_replaces_with_upper(self):
        assert clamp_unit(9.0, self.B, "m2") == 6.0

    def test_m1_replaces_with_lower(self):
        assert clamp_unit(9.0, self.B, "m1") == 0.0

    def test_m3_picks_bound_by_sign(self):
        assert clamp_unit(-4.0, self.B, "m3") == 0.0
        assert clamp_unit(9.0, self.B, "m3") == 6.0

    def test_in_range_passes_through(self):
        for method in ("m1", "m2", "m3"):
            assert clamp_unit(3.25, self.B, method) == 3.25

    def test_vectorized(self):
        out = clamp_unit(np.array([-1.0, 3.0, 7.0]), self.B, "m3")
        assert out.tolist() == [0.0, 3.0, 6.0]


class TestProfiling:
    def test_relu_lower_bounds_nonnegative(self, desk_model, calib_data):
        X, _ = calib_data
        bounds = profile_ranges(desk_model, X)
        assert bounds[0].lower >= 0.0 and bounds[1].lower >= 0.0

    def test_single_input_gives_extremes(self):
        model = tiny_model()
        x = np.array([[1.0, -1.0]])
        (b,) = profile_ranges(model, x)
        z = model.reference_logits(x)
        assert b.lower == z.min() and b.upper == z.max()

    def test_containment_under_batch_growth(self, desk_model, calib_data):
        # slack of a few ULP: BLAS blocking differs with batch shape
        X, _ = calib_data
        small = profile_ranges(desk_model, X[:32])
        big = profile_ranges(desk_model, X)
        for bs, bb in zip(small, big):
            tol = 1e-9 * max(1.0, abs(bs.lower), abs(bs.upper))
            assert bb.lower <= bs.lower + tol and bs.upper <= bb.upper + tol

    def test_empty_dataset_rejected(self, desk_model):
        with pytest.raises(EmptyDataset):
            profile_ranges(desk_model, np.empty((0, 64)))

    def test_input_bounds(self):
        b = profile_input_bounds(np.array([[1.0, -3.0], [2.0, 0.0]]))
        assert (b.lower, b.upper) == (-3.0, 2.0)


class TestQuantizedForward:
    def test_deterministic(self, desk_model, test_data):
        X, _ = test_data
        a = desk_model.predict_logits(X[:16])
        b = desk_model.predict_logits(X[:16])
        assert np.array_equal(a, b)

    def test_matches_reference_within_documented_bound(self, desk_model, calib_data):
        """Error budget per layer, all-exact backends, no clamping:

        weights off by <= s_w/2 each, activations off by <= s_x/2 plus the
        propagated previous-layer error (code clipping only projects toward
        the representable range, so it never inflates the error on data whose
        float activations profiled the range), bias rounding <= s_w*s_x/2,
        and ReLU is 1-Lipschitz.  Composed per layer:

            e_out = ||W_hat||_inf * (s_x/2 + e_in) + (s_w/2) * max_row ||h||_1
                    + s_w * s_x / 2
        """
        X, _ = calib_data
        model = desk_model.with_protection("none").prepare()
        logits_q = model.predict_logits(X)
        logits_f, float_outs = model.reference_forward(X)
        s_x = model.act_schemes_[0].scale
        h = X
        err = 0.0
        for i, layer in enumerate(model.layers):
            s_w = model.schemes_[i].scale
            w_hat = (model.codes_[i] - model.schemes_[i].zero_code) * s_w
            gain = np.abs(w_hat).sum(axis=1).max()
            h1_max = np.abs(h).sum(axis=1).max()
            err = gain * (s_x / 2 + err) + (s_w / 2) * h1_max + s_w * s_x / 2
            h = float_outs[i]
        assert np.max(np.abs(logits_q - logits_f)) <= err + 1e-9

    def test_infer_single_vector(self, desk_model, test_data):
        X, _ = test_data
        row = infer(desk_model, X[0])
        assert np.array_equal(row, desk_model.predict_logits(X[:1])[0])
        with pytest.raises(ShapeMismatch):
            infer(desk_model, X[:2])

    def test_wrong_input_dim(self, desk_model):
        with pytest.raises(ShapeMismatch):
            desk_model.predict_logits(np.zeros((1, 63)))

    def test_predict_returns_top1(self, desk_model, test_data):
        X, _ = test_data
        labels = desk_model.predict(X[:8])
        assert np.array_equal(labels, desk_model.predict_logits(X[:8]).argmax(axis=1))


class TestWeightFaults:
    def test_unknown_layer_rejected(self, desk_model, test_data):
        X, _ = test_data
        plan = FaultPlan(sites=(FaultSite("weight", "nope", 0, 0, 0),))
        with pytest.raises(InvalidFaultSite):
            desk_model.predict_logits(X[:1], plan)

    def test_out_of_range_site_rejected(self, desk_model, test_data):
        X, _ = test_data
        plan = FaultPlan(sites=(FaultSite("weight", "fc0", 10**6, 0, 0),))
        with pytest.raises(InvalidFaultSite):
            desk_model.predict_logits(X[:1], plan)

    def test_msb_copy_flip_is_corrected(self, desk_model, test_data):
        X, _ = test_data
        protected = desk_model.with_protection("msb").prepare()
        clean = protected.predict_logits(X[:32])
        b = protected.weight_bits
        sites = [FaultSite("weight", "fc0", e, b, 0) for e in range(0, 2048, 97)]
        sites += [FaultSite("weight", "fc1", e, b + 1, 0) for e in range(0, 320, 41)]
        faulty = protected.predict_logits(X[:32], FaultPlan(sites=tuple(sites)))
        assert np.array_equal(clean, faulty)

    def test_primary_msb_flip_corrected_only_when_protected(self, desk_model, test_data):
        X, _ = test_data
        b = desk_model.weight_bits
        every_msb = FaultPlan(
            sites=tuple(
                FaultSite("weight", name, e, b - 1, 0)
                for name, count in (("fc0", 2048), ("fc1", 1024), ("fc2", 320))
                for e in range(count)
            )
        )
        protected = desk_model.with_protection("msb").prepare()
        assert np.array_equal(
            protected.predict_logits(X[:32]), protected.predict_logits(X[:32], every_msb)
        )
        unprotected = desk_model.with_protection("none").prepare()
        assert not np.array_equal(
            unprotected.predict_logits(X[:32]),
            unprotected.predict_logits(X[:32], every_msb),
        )

    def test_heavy_faults_cannot_help_on_average(self, desk_model, test_data):
        X, y = test_data
        model = desk_model.with_protection("none").prepare()
        golden = model.score(X[:64], y[:64])
        faulty = []
        for seed in range(100):
            plan = weight_fault_plan(model, 0.1, RngSpec(seed, 7))
            faulty.append(model.score(X[:64], y[:64], plan))
        assert golden >= np.mean(faulty)


class TestTransientFaultRouting:
    def test_adder_fault_matches_scalar_recompute(self):
        cfg = MultConfig("adam", 8, 0, 4)
        model = tiny_model(backend=cfg)
        model.prepare()
        x = np.array([[1.0, 2.0]])
        clean = model.predict_logits(x)
        invocation, bits = 1, [2]  # output 0, operand 1
        plan = FaultPlan(sites=(FaultSite("adder", "L0", 0, bits[0], invocation),))
        faulty = model.predict_logits(x, plan)
        x_codes = np.clip(
            np.sign(x / model.act_schemes_[0].scale)
            * np.floor(np.abs(x / model.act_schemes_[0].scale) + 0.5)
            + model.act_schemes_[0].zero_point,
            0,
            255,
        ).astype(int)
        wc = int(model.codes_[0][0, 1])
        xc = int(x_codes[0, 1])
        delta = (
            adam_mul(wc, xc, cfg, bits).product - adam_mul(wc, xc, cfg).product
        ) * model.schemes_[0].scale * model.act_schemes_[0].scale
        assert faulty[0, 0] - clean[0, 0] == pytest.approx(delta, abs=1e-12)
        assert faulty[0, 1] == clean[0, 1]

    def test_adder_fault_needs_adam_backend(self, desk_model, test_data):
        X, _ = test_data
        plan = FaultPlan(sites=(FaultSite("adder", "fc0", 0, 0, 0),))
        with pytest.raises(InvalidFaultSite):
            desk_model.predict_logits(X[:1], plan)

    def test_activation_fault_matches_scalar_recompute(self):
        model = tiny_model()
        model.prepare()
        x = np.array([[1.0, 2.0]])
        clean = model.predict_logits(x)
        plan = FaultPlan(sites=(FaultSite("activation", "L0", 1, 7, 0),))
        faulty = model.predict_logits(x, plan)
        scheme = model.act_schemes_[0]
        xc = int(round(x[0, 1] / scheme.scale) + scheme.zero_point)
        xf = xc ^ (1 << 7)
        wc = int(model.codes_[0][0, 1])
        z_w = model.schemes_[0].zero_code
        delta = ((wc * xf - wc * xc) - z_w * (xf - xc)) * (
            model.schemes_[0].scale * scheme.scale
        )
        assert faulty[0, 0] - clean[0, 0] == pytest.approx(delta, abs=1e-12)
        assert faulty[0, 1] == clean[0, 1]  # invocation 0 leaves output 1 clean

    def test_activation_fault_site_validation(self, desk_model, test_data):
        X, _ = test_data
        bad = FaultPlan(sites=(FaultSite("activation", "fc0", 0, 9, 0),))
        with pytest.raises(InvalidFaultSite):
            desk_model.predict_logits(X[:1], bad)
        bad = FaultPlan(sites=(FaultSite("activation", "fc0", 0, 0, 64),))
        with pytest.raises(InvalidFaultSite):
            desk_model.predict_logits(X[:1], bad)


class TestBackendSubstitution:
    def test_adam_equals_mitchell_at_net_level(self, desk_model, test_data):
        X, _ = test_data
        layers_m = [
            LayerSpec(
                name=l.name, kind=l.kind, in_dim=l.in_dim, out_dim=l.out_dim,
                activation=l.activation, backend=MultConfig("mitchell", 8, 0),
            )
            for l in desk_model.layers
        ]
        layers_a = [
            LayerSpec(
                name=l.name, kind=l.kind, in_dim=l.in_dim, out_dim=l.out_dim,
                activation=l.activation, backend=MultConfig("adam", 8, 0, 5),
            )
            for l in desk_model.layers
        ]
        common = dict(
            weight_bits=desk_model.weight_bits,
            activation_bits=desk_model.activation_bits,
            bounds=desk_model.bounds,
            input_bounds=desk_model.input_bounds,
        )
        m = QuantizedNetwork(layers_m, desk_model.weights, desk_model.biases, **common)
        a = QuantizedNetwork(layers_a, desk_model.weights, desk_model.biases, **common)
        assert np.array_equal(m.predict_logits(X[:32]), a.predict_logits(X[:32]))

    def test_approximate_backend_changes_logits(self, desk_model, test_data):
        X, _ = test_data
        layers = [
            LayerSpec(
                name=l.name, kind=l.kind, in_dim=l.in_dim, out_dim=l.out_dim,
                activation=l.activation, backend=MultConfig("mitchell", 8, 0),
            )
            for l in desk_model.layers
        ]
        m = QuantizedNetwork(
            layers, desk_model.weights, desk_model.biases,
            weight_bits=8, activation_bits=8,
            bounds=desk_model.bounds, input_bounds=desk_model.input_bounds,
        )
        exact_logits = desk_model.with_protection("none").prepare().predict_logits(X[:32])
        assert not np.array_equal(m.predict_logits(X[:32]), exact_logits)


class TestClampSoundness:
    def test_outputs_within_bounds_under_faults(self, desk_model, test_data):
        X, _ = test_data
        clamped = desk_model.with_protection("clamp", "m3").prepare()
        for seed in range(10):
            plan = weight_fault_plan(clamped, 1e-3, RngSpec(seed, 11))
            _, outs = clamped.predict_logits(X[:64], plan, return_layer_outputs=True)
            for out, b in zip(outs, clamped.bounds):
                assert out.min() >= b.lower - 1e-12
                assert out.max() <= b.upper + 1e-12


class TestAccuracy:
    def test_single_correct_item(self, desk_model, test_data):
        X, y = test_data
        pred = desk_model.predict(X[:1])[0]
        assert evaluate_accuracy(desk_model, X[:1], [pred]) == 1.0

    def test_adversarial_labels(self, desk_model, test_data):
        X, _ = test_data
        pred = desk_model.predict(X[:1])[0]
        wrong = (pred + 1) % 10
        assert evaluate_accuracy(desk_model, X[:1], [wrong]) == 0.0

    def test_label_shape_checked(self, desk_model, test_data):
        X, _ = test_data
        with pytest.raises(ShapeMismatch):
            evaluate_accuracy(desk_model, X[:4], [0, 1])


class TestConvAsMatmul:
    def make_conv_model(self, padding=0):
        rng = np.random.default_rng(5)
        conv = LayerSpec(
            name="c0", kind="conv", in_shape=(2, 5, 5), kernel=(3, 3),
            out_channels=3, stride=1, padding=padding, activation="relu",
        )
        head = LayerSpec(
            name="d0", kind="dense", in_dim=conv.out_dim, out_dim=4, activation="none",
        )
        weights = [rng.normal(0, 0.3, size=(3, 18)), rng.normal(0, 0.3, size=(4, conv.out_dim))]
        biases = [rng.normal(0, 0.1, size=3), np.zeros(4)]
        model = QuantizedNetwork(
            [conv, head], weights, biases, input_bounds=Bounds(-2.0, 2.0)
        )
        rng2 = np.random.default_rng(8)
        X = rng2.uniform(-2, 2, size=(6, 50))
        model.bounds = profile_ranges(model, X)
        return model, X

    @staticmethod
    def direct_conv(x, layer, w, bias):
        c, hh, ww = layer.in_shape
        kh, kw = layer.kernel
        oh, ow = layer.out_positions
        img = x.reshape(c, hh, ww)
        if layer.padding:
            img = np.pad(img, ((0, 0), (layer.padding,) * 2, (layer.padding,) * 2))
        out = np.zeros((layer.out_channels, oh, ow))
        for o in range(layer.out_channels):
            kernel = w[o].reshape(c, kh, kw)
            for yy in range(oh):
                for xx in range(ow):
                    patch = img[:, yy : yy + kh, xx : xx + kw]
                    out[o, yy, xx] = (patch * kernel).sum() + bias[o]
        return out.reshape(-1)

    @pytest.mark.parametrize("padding", [0, 1])
    def test_float_path_matches_direct_convolution(self, padding):
        model, X = self.make_conv_model(padding)
        _, outs = model.reference_forward(X)
        for i in range(X.shape[0]):
            want = np.maximum(
                self.direct_conv(X[i], model.layers[0], model.weights[0], model.biases[0]),
                0.0,
            )
            assert np.allclose(outs[0][i], want)

    def test_quantized_path_tracks_reference(self):
        model, X = self.make_conv_model()
        model.prepare()
        q = model.predict_logits(X)
        f = model.reference_logits(X)
        assert np.max(np.abs(q - f)) < 0.5  # coarse: quantization noise only

    def test_activation_fault_on_conv_layer(self):
        model, X = self.make_conv_model()
        model.prepare()
        clean = model.predict_logits(X[:2])
        plan = FaultPlan(sites=(FaultSite("activation", "c0", 12, 7, 0),))
        faulty = model.predict_logits(X[:2], plan)
        assert faulty.shape == clean.shape
        assert not np.array_equal(faulty, clean)


class TestModelValidation:
    def test_softmax_must_be_last(self):
        layers = [
            LayerSpec(name="a", in_dim=2, out_dim=2, activation="softmax"),
            LayerSpec(name="b", in_dim=2, out_dim=2, activation="none"),
        ]
        with pytest.raises(ShapeMismatch):
            QuantizedNetwork(layers, [np.eye(2), np.eye(2)], input_bounds=Bounds(0, 1))

    def test_adjacent_dims_checked(self):
        layers = [
            LayerSpec(name="a", in_dim=2, out_dim=3, activation="relu"),
            LayerSpec(name="b", in_dim=4, out_dim=2, activation="none"),
        ]
        with pytest.raises(ShapeMismatch):
            QuantizedNetwork(
                layers, [np.zeros((3, 2)), np.zeros((2, 4))], input_bounds=Bounds(0, 1)
            )

    def test_weight_shape_checked(self):
        layer = LayerSpec(name="a", in_dim=2, out_dim=3, activation="none")
        with pytest.raises(ShapeMismatch):
            QuantizedNetwork([layer], [np.zeros((2, 3))], input_bounds=Bounds(0, 1))

    def test_clamp_requires_bounds(self):
        layer = LayerSpec(name="a", in_dim=2, out_dim=2, activation="none", protection="clamp")
        model = QuantizedNetwork([layer], [np.eye(2)], input_bounds=Bounds(0, 1))
        with pytest.raises(ShapeMismatch):
            model.prepare()
