"""MAC-level quantized inference with selectable multiplier backends.

Every scalar product inside a layer is produced by that layer's configured
multiplier on unsigned codes; accumulation is signed integer (32-bit model)
with zero-point correction, then one rescale per neuron back to the real
domain.  Convolutions are lowered to matrix multiplication so a single MAC
engine serves both layer kinds.  Fault plans hook in at three datapaths:
stored weight words (persistent), quantized activation words (per consuming
output unit), and mantissa-adder result bits (per MAC invocation).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_batch, check_bits
from .errors import EmptyDataset, InvalidFaultSite, ShapeMismatch
from .faults import ACTIVATION, ADDER, WEIGHT, EMPTY_PLAN, FaultPlan, apply_word_faults
from .multipliers import ADAM, EXACT, MultConfig, adam_mul, product_array
from .quantize import (
    QuantScheme,
    _round_half_away,
    majority_decode_words,
    protect_words,
    quantize,
    stored_width,
)

ACC_LIMIT = 1 << 31  # accumulator model: 32-bit signed

DENSE = "dense"
CONV = "conv"

PROT_NONE = "none"
PROT_CLAMP = "clamp"
PROT_MSB = "msb"

M1, M2, M3 = "m1", "m2", "m3"


@dataclass(frozen=True)
class Bounds:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"bounds [{self.lower}, {self.upper}] are inverted")

    def contains(self, x) -> bool:
        arr = np.asarray(x, dtype=np.float64)
        return bool(np.all((arr >= self.lower) & (arr <= self.upper)))


@dataclass(frozen=True)
class LayerSpec:
    """One dense or conv-as-matmul layer and its backend/protection choices."""

    name: str
    kind: str = DENSE
    in_dim: int = 0
    out_dim: int = 0
    activation: str = "relu"  # relu | none | softmax (output only)
    backend: MultConfig = MultConfig(EXACT, 8)
    protection: str = PROT_NONE  # none | clamp | msb
    clamp_method: str = M3
    # conv-only geometry
    in_shape: tuple[int, int, int] | None = None  # (channels, height, width)
    kernel: tuple[int, int] | None = None
    out_channels: int = 0
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.kind not in (DENSE, CONV):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ("relu", "none", "softmax"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.protection not in (PROT_NONE, PROT_CLAMP, PROT_MSB):
            raise ValueError(f"unknown protection {self.protection!r}")
        if self.clamp_method not in (M1, M2, M3):
            raise ValueError(f"unknown clamp method {self.clamp_method!r}")
        if self.kind == CONV:
            if self.in_shape is None or self.kernel is None or self.out_channels <= 0:
                raise ValueError(f"conv layer {self.name} needs in_shape, kernel, out_channels")
            c, height, width = self.in_shape
            kh, kw = self.kernel
            oh = (height + 2 * self.padding - kh) // self.stride + 1
            ow = (width + 2 * self.padding - kw) // self.stride + 1
            if oh <= 0 or ow <= 0:
                raise ValueError(f"conv layer {self.name} has empty output")
            object.__setattr__(self, "in_dim", c * height * width)
            object.__setattr__(self, "out_dim", self.out_channels * oh * ow)
        elif self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError(f"layer {self.name} needs positive dims")

    @property
    def fan_in(self) -> int:
        """Operands per output unit (rows of the lowered weight matrix)."""
        if self.kind == DENSE:
            return self.in_dim
        c = self.in_shape[0]
        kh, kw = self.kernel
        return c * kh * kw

    @property
    def out_positions(self) -> tuple[int, int]:
        c, height, width = self.in_shape
        kh, kw = self.kernel
        oh = (height + 2 * self.padding - kh) // self.stride + 1
        ow = (width + 2 * self.padding - kw) // self.stride + 1
        return oh, ow

    @property
    def mac_count(self) -> int:
        """Multiplier invocations per forward pass of one input."""
        return self.out_dim * self.fan_in


def clamp_unit(mac_out, bounds: Bounds, method: str = M3):
    """Range-restrict MAC outputs; out-of-range values are replaced by a bound.

    m1 replaces with the lower bound, m2 with the upper bound, m3 picks the
    bound by the MAC output's sign.
    """
    x = np.asarray(mac_out, dtype=np.float64)
    oob = (x < bounds.lower) | (x > bounds.upper)
    if method == M1:
        repl = np.full_like(x, bounds.lower)
    elif method == M2:
        repl = np.full_like(x, bounds.upper)
    elif method == M3:
        repl = np.where(x > 0, bounds.upper, bounds.lower)
    else:
        raise ValueError(f"unknown clamp method {method!r}")
    out = np.where(oob, repl, x)
    return float(out) if np.isscalar(mac_out) else out


def _conv_col_index(layer: LayerSpec) -> np.ndarray:
    """(fan_in, positions) map from col rows to flat input indices; -1 is padding."""
    c, height, width = layer.in_shape
    kh, kw = layer.kernel
    oh, ow = layer.out_positions
    idx = np.full((layer.fan_in, oh * ow), -1, dtype=np.int64)
    for pos in range(oh * ow):
        oy, ox = divmod(pos, ow)
        row = 0
        for ch in range(c):
            for ky in range(kh):
                for kx in range(kw):
                    iy = oy * layer.stride - layer.padding + ky
                    ix = ox * layer.stride - layer.padding + kx
                    if 0 <= iy < height and 0 <= ix < width:
                        idx[row, pos] = (ch * height + iy) * width + ix
                    row += 1
    return idx


@dataclass(frozen=True)
class AffineScheme:
    """Asymmetric activation quantization over a profiled range.

    Activations map to unsigned codes with code = round(x/scale) + zero_point;
    the quantized range always includes zero so the zero code is exact.  ReLU
    layers get zero_point 0 and full unsigned resolution over [0, upper].
    """

    bits: int
    scale: float
    zero_point: int

    @property
    def code_max(self) -> int:
        return (1 << self.bits) - 1


def _quantize_activations(x: np.ndarray, scheme: AffineScheme) -> np.ndarray:
    codes = _round_half_away(x / scheme.scale) + scheme.zero_point
    return np.clip(codes, 0, scheme.code_max).astype(np.int64)


def _activation_scheme(lo: float, hi: float, bits: int) -> AffineScheme:
    lo = min(lo, 0.0)
    hi = max(hi, 0.0)
    levels = (1 << bits) - 1
    if hi - lo <= 0:
        return AffineScheme(bits, 1.0, 0)
    scale = (hi - lo) / levels
    zero_point = int(np.clip(round(-lo / scale), 0, levels))
    return AffineScheme(bits, scale, zero_point)


class QuantizedNetwork:
    """Layer list plus float master weights, quantized on demand.

    The float tensors are the source of truth; ``prepare(bits)`` derives the
    quantized codes, protected stored words, activation schemes and integer
    biases for any code width, so width sweeps re-prepare the same model.
    Inference is pure given (input, plan): stored words are copied before
    fault application.
    """

    def __init__(
        self,
        layers: list[LayerSpec],
        weights: list[np.ndarray],
        biases: list[np.ndarray] | None = None,
        *,
        weight_bits: int = 8,
        activation_bits: int = 8,
        bounds: list[Bounds] | None = None,
        input_bounds: Bounds | None = None,
    ):
        if not layers:
            raise ShapeMismatch("a network needs at least one layer")
        if len(weights) != len(layers):
            raise ShapeMismatch("one weight tensor per layer required")
        self.layers = list(layers)
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        if biases is None:
            self.biases = [np.zeros(l.out_dim) for l in layers]
        else:
            self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.weight_bits = check_bits(weight_bits)
        self.activation_bits = check_bits(activation_bits)
        self.bounds = list(bounds) if bounds is not None else None
        self.input_bounds = input_bounds
        self._col_index = [
            _conv_col_index(l) if l.kind == CONV else None for l in layers
        ]
        self._check_shapes()
        self._prepared_bits: int | None = None

    def _check_shapes(self):
        prev_out = None
        for i, (layer, w, b) in enumerate(zip(self.layers, self.weights, self.biases)):
            expect = (layer.out_channels if layer.kind == CONV else layer.out_dim, layer.fan_in)
            if w.shape != expect:
                raise ShapeMismatch(
                    f"layer {layer.name}: weight shape {w.shape}, expected {expect}"
                )
            blen = layer.out_channels if layer.kind == CONV else layer.out_dim
            if b.shape != (blen,):
                raise ShapeMismatch(f"layer {layer.name}: bias shape {b.shape} != ({blen},)")
            if prev_out is not None and layer.in_dim != prev_out:
                raise ShapeMismatch(
                    f"layer {layer.name}: in_dim {layer.in_dim} != previous out_dim {prev_out}"
                )
            if layer.activation == "softmax" and i != len(self.layers) - 1:
                raise ShapeMismatch("softmax is only allowed on the final layer")
            prev_out = layer.out_dim
        if self.bounds is not None and len(self.bounds) != len(self.layers):
            raise ShapeMismatch("bounds must list one entry per layer")

    # -- quantization ------------------------------------------------------

    def prepare(self, weight_bits: int | None = None) -> "QuantizedNetwork":
        """Quantize weights, encode protection, derive the activation format.

        Activations share one network-global affine format (the single
        datapath format of an accelerator), sized over the input range and
        every profiled layer range.  The per-layer bounds only drive the
        clamp units; a corrupted activation word can therefore represent
        values far outside its own layer's range, which is exactly what
        layer-wise range restriction exists to catch.
        """
        if weight_bits is not None:
            self.weight_bits = check_bits(weight_bits)
        for layer in self.layers:
            if layer.protection == PROT_CLAMP and self.bounds is None:
                raise ShapeMismatch(f"layer {layer.name} clamps but the model has no bounds")
        if self.bounds is None and len(self.layers) > 1:
            raise ShapeMismatch("multi-layer inference needs per-layer bounds")
        if self.input_bounds is None:
            raise ShapeMismatch("inference needs input bounds")
        b = self.weight_bits
        ranges = [self.input_bounds] + (self.bounds or [])
        act_scheme = _activation_scheme(
            min(r.lower for r in ranges),
            max(r.upper for r in ranges),
            self.activation_bits,
        )
        self.schemes_: list[QuantScheme] = []
        self.codes_: list[np.ndarray] = []
        self.stored_: list[np.ndarray] = []
        self.stored_bits_: list[int] = []
        self.act_schemes_: list[AffineScheme] = []
        self.bias_ints_: list[np.ndarray] = []
        for layer, w, bias in zip(self.layers, self.weights, self.biases):
            codes, scheme = quantize(w, b)
            protected = layer.protection == PROT_MSB
            stored = protect_words(codes, b) if protected else codes
            bias_int = _round_half_away(bias / (scheme.scale * act_scheme.scale)).astype(
                np.int64
            )
            self.schemes_.append(scheme)
            self.codes_.append(codes)
            self.stored_.append(stored)
            self.stored_bits_.append(stored_width(b, protected))
            self.act_schemes_.append(act_scheme)
            self.bias_ints_.append(bias_int)
        self._prepared_bits = b
        return self

    def ensure_prepared(self):
        """Prepare lazily if the quantized state is stale for the current width."""
        if self._prepared_bits != self.weight_bits:
            self.prepare()

    # -- bookkeeping -------------------------------------------------------

    def memory_bits(self, weight_bits: int | None = None) -> int:
        """Weight storage bits across layers at the current protection settings."""
        b = self.weight_bits if weight_bits is None else check_bits(weight_bits)
        return sum(
            w.size * stored_width(b, layer.protection == PROT_MSB)
            for layer, w in zip(self.layers, self.weights)
        )

    def param_count(self) -> int:
        return sum(w.size for w in self.weights)

    def mac_count(self) -> int:
        """Multiplier invocations per input, the execution-time proxy base."""
        return sum(l.mac_count for l in self.layers)

    def with_protection(self, protection: str, clamp_method: str = M3) -> "QuantizedNetwork":
        """Copy of the model with every layer's protection replaced."""
        layers = [
            replace(l, protection=protection, clamp_method=clamp_method)
            for l in self.layers
        ]
        return QuantizedNetwork(
            layers,
            self.weights,
            self.biases,
            weight_bits=self.weight_bits,
            activation_bits=self.activation_bits,
            bounds=self.bounds,
            input_bounds=self.input_bounds,
        )

    # -- float reference path ---------------------------------------------

    def reference_forward(self, X) -> tuple[np.ndarray, list[np.ndarray]]:
        """Plain real-arithmetic forward pass on the float master weights.

        No quantization, no clamping, no faults; the independent reference
        the quantized datapath is checked against.
        """
        h = check_batch(X)
        if h.shape[1] != self.layers[0].in_dim:
            raise ShapeMismatch(f"input dim {h.shape[1]} != {self.layers[0].in_dim}")
        outputs = []
        for i, (layer, w, bias) in enumerate(zip(self.layers, self.weights, self.biases)):
            if layer.kind == DENSE:
                z = h @ w.T + bias
            else:
                z = _conv_forward_float(h, layer, self._col_index[i], w, bias)
            if layer.activation == "relu":
                z = np.maximum(z, 0.0)
            outputs.append(z)
            h = z
        return h, outputs

    def reference_logits(self, X) -> np.ndarray:
        return self.reference_forward(X)[0]

    # -- quantized path ----------------------------------------------------

    def predict_logits(
        self,
        X,
        plan: FaultPlan = EMPTY_PLAN,
        *,
        return_layer_outputs: bool = False,
    ):
        """Quantized MAC-level forward pass under a fault plan."""
        self.ensure_prepared()
        Xb = check_batch(X)
        if Xb.shape[1] != self.layers[0].in_dim:
            raise ShapeMismatch(f"input dim {Xb.shape[1]} != {self.layers[0].in_dim}")
        self._check_plan(plan)

        weight_codes = self._faulty_weight_codes(plan)
        h = Xb
        outputs = []
        for i, layer in enumerate(self.layers):
            act_scheme = self.act_schemes_[i]
            x_codes = _quantize_activations(h, act_scheme)
            if layer.kind == DENSE:
                acc = self._dense_acc(i, layer, weight_codes[i], x_codes, plan)
            else:
                acc = self._conv_acc(i, layer, weight_codes[i], x_codes, plan)
            if np.abs(acc).max(initial=0) >= ACC_LIMIT:
                raise ShapeMismatch(
                    f"layer {layer.name}: accumulator exceeds the 32-bit model"
                )
            mac_real = acc.astype(np.float64) * (
                self.schemes_[i].scale * act_scheme.scale
            )
            if layer.protection == PROT_CLAMP:
                mac_real = clamp_unit(mac_real, self.bounds[i], layer.clamp_method)
            if layer.activation == "relu":
                mac_real = np.maximum(mac_real, 0.0)
            outputs.append(mac_real)
            h = mac_real
        if return_layer_outputs:
            return h, outputs
        return h

    def predict(self, X, plan: FaultPlan = EMPTY_PLAN) -> np.ndarray:
        """Top-1 class indices, sklearn-style."""
        return np.argmax(self.predict_logits(X, plan), axis=1)

    def score(self, X, y, plan: FaultPlan = EMPTY_PLAN) -> float:
        """Top-1 accuracy against integer labels."""
        return evaluate_accuracy(self, X, y, plan)

    # -- internals ---------------------------------------------------------

    def _check_plan(self, plan: FaultPlan):
        names = {l.name for l in self.layers}
        for s in plan.sites:
            if s.target not in names:
                raise InvalidFaultSite(f"site targets unknown layer {s.target!r}")

    def _faulty_weight_codes(self, plan: FaultPlan) -> list[np.ndarray]:
        codes = []
        for i, layer in enumerate(self.layers):
            stored = self.stored_[i]
            if plan.select(kind=WEIGHT, target=layer.name):
                try:
                    stored = apply_word_faults(
                        stored, plan, word_bits=self.stored_bits_[i], target=layer.name
                    )
                except Exception as exc:
                    raise InvalidFaultSite(f"layer {layer.name}: {exc}") from exc
            if layer.protection == PROT_MSB:
                codes.append(majority_decode_words(stored, self.weight_bits))
            else:
                codes.append(stored & ((1 << self.weight_bits) - 1))
        return codes

    def _dense_acc(self, i, layer, w_codes, x_codes, plan) -> np.ndarray:
        z_w = self.schemes_[i].zero_code
        z_x = self.act_schemes_[i].zero_point
        cfg = layer.backend
        batch = x_codes.shape[0]
        if cfg.family == EXACT:
            psum = x_codes @ w_codes.T  # (batch, out)
        else:
            prods = product_array(
                w_codes[None, :, :], x_codes[:, None, :], cfg
            ).astype(np.int64)
            psum = prods.sum(axis=2)
        acc = (
            psum
            - z_x * w_codes.sum(axis=1)[None, :]
            - z_w * x_codes.sum(axis=1)[:, None]
            + layer.in_dim * z_w * z_x
            + self.bias_ints_[i][None, :]
        )
        self._patch_activation_sites(
            i, layer, w_codes, x_codes, acc, plan, z_w
        )
        self._patch_adder_sites(i, layer, w_codes, x_codes, acc, plan)
        return acc

    def _conv_acc(self, i, layer, w_codes, x_codes, plan) -> np.ndarray:
        z_w = self.schemes_[i].zero_code
        z_x = self.act_schemes_[i].zero_point
        cfg = layer.backend
        col_index = self._col_index[i]
        batch = x_codes.shape[0]
        n_pos = col_index.shape[1]
        # gather with padding entries pinned at the zero code
        cols = np.where(
            col_index[None, :, :] >= 0,
            x_codes[:, np.clip(col_index, 0, None)],
            z_x,
        )  # (batch, fan_in, n_pos)
        if cfg.family == EXACT:
            psum = np.einsum("ok,bkp->bop", w_codes, cols)
        else:
            prods = product_array(
                w_codes[None, :, :, None], cols[:, None, :, :], cfg
            ).astype(np.int64)
            psum = prods.sum(axis=2)  # (batch, out_channels, n_pos)
        acc = (
            psum
            - z_x * w_codes.sum(axis=1)[None, :, None]
            - z_w * cols.sum(axis=1)[:, None, :]
            + layer.fan_in * z_w * z_x
            + self.bias_ints_[i][None, :, None]
        ).reshape(batch, layer.out_dim)
        self._patch_activation_sites(
            i, layer, w_codes, x_codes, acc, plan, z_w, cols=cols, col_index=col_index
        )
        self._patch_adder_sites(i, layer, w_codes, x_codes, acc, plan, cols=cols)
        return acc

    def _patch_activation_sites(
        self, i, layer, w_codes, x_codes, acc, plan, z_w, cols=None, col_index=None
    ):
        sites = plan.select(kind=ACTIVATION, target=layer.name)
        if not sites:
            return
        cfg = layer.backend
        ab = self.activation_bits
        grouped: dict[tuple[int, int], int] = {}
        for s in sites:
            if s.element >= layer.in_dim or s.bit >= ab or s.invocation >= layer.out_dim:
                raise InvalidFaultSite(f"activation site {s} outside layer {layer.name}")
            key = (s.element, s.invocation)
            grouped[key] = grouped.get(key, 0) ^ (1 << s.bit)
        n_pos = col_index.shape[1] if col_index is not None else None
        for (element, unit), mask in grouped.items():
            x_col = x_codes[:, element]
            x_flip = x_col ^ mask
            if layer.kind == DENSE:
                w = w_codes[:, element][unit]
                delta = self._prod_delta(w, x_col, x_flip, cfg) - z_w * (x_flip - x_col)
                acc[:, unit] += delta
            else:
                oc_i, pos = divmod(unit, n_pos)
                rows = np.flatnonzero(col_index[:, pos] == element)
                for k in rows.tolist():
                    w = w_codes[oc_i, k]
                    delta = self._prod_delta(w, x_col, x_flip, cfg) - z_w * (
                        x_flip - x_col
                    )
                    acc[:, unit] += delta

    @staticmethod
    def _prod_delta(w, x_base, x_flip, cfg) -> np.ndarray:
        p0 = product_array(np.full_like(x_base, w), x_base, cfg).astype(np.int64)
        p1 = product_array(np.full_like(x_flip, w), x_flip, cfg).astype(np.int64)
        return p1 - p0

    def _patch_adder_sites(self, i, layer, w_codes, x_codes, acc, plan, cols=None):
        sites = plan.select(kind=ADDER, target=layer.name)
        if not sites:
            return
        cfg = layer.backend
        if cfg.family != ADAM:
            raise InvalidFaultSite(
                f"layer {layer.name}: adder faults need an adam backend "
                "(model an unprotected adder as adam with h=0)"
            )
        grouped: dict[int, list[int]] = {}
        for s in sites:
            if s.invocation >= layer.mac_count or s.bit > cfg.mantissa_bits:
                raise InvalidFaultSite(f"adder site {s} outside layer {layer.name}")
            grouped.setdefault(s.invocation, []).append(s.bit)
        fan_in = layer.fan_in
        n_pos = cols.shape[2] if cols is not None else None
        for invocation, bits in grouped.items():
            unit, k = divmod(invocation, fan_in)
            if layer.kind == DENSE:
                w = int(w_codes[unit, k])
                xs = x_codes[:, k]
            else:
                oc_i, pos = divmod(unit, n_pos)
                w = int(w_codes[oc_i, k])
                xs = cols[:, k, pos]
            for bi, x in enumerate(xs.tolist()):
                clean = adam_mul(w, int(x), cfg).product
                faulty = adam_mul(w, int(x), cfg, bits).product
                acc[bi, unit] += faulty - clean


def _conv_forward_float(h, layer, col_index, w, bias) -> np.ndarray:
    batch = h.shape[0]
    cols = np.where(col_index[None, :, :] >= 0, h[:, np.clip(col_index, 0, None)], 0.0)
    z = np.einsum("ok,bkp->bop", w, cols) + bias[None, :, None]
    return z.reshape(batch, layer.out_dim)


def profile_ranges(model: QuantizedNetwork, X) -> list[Bounds]:
    """Per-layer (min, max) of post-activation values on a fault-free run."""
    Xb = check_batch(X)
    _, outputs = model.reference_forward(Xb)
    return [Bounds(float(o.min()), float(o.max())) for o in outputs]


def profile_input_bounds(X) -> Bounds:
    Xb = check_batch(X)
    return Bounds(float(Xb.min()), float(Xb.max()))


def infer(model: QuantizedNetwork, x, plan: FaultPlan = EMPTY_PLAN) -> np.ndarray:
    """Logits for a single input vector under a fault plan."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeMismatch("infer takes a single input vector")
    return model.predict_logits(x.reshape(1, -1), plan)[0]


def evaluate_accuracy(model: QuantizedNetwork, X, y, plan: FaultPlan = EMPTY_PLAN) -> float:
    """Top-1 accuracy over a labeled batch, faults applied identically per input."""
    Xb = check_batch(X)
    labels = np.asarray(y, dtype=np.int64)
    if labels.ndim != 1 or labels.shape[0] != Xb.shape[0]:
        raise ShapeMismatch("labels must be one integer per input row")
    if labels.shape[0] == 0:
        raise EmptyDataset("empty labeled batch")
    logits = model.predict_logits(Xb, plan)
    return float(np.mean(np.argmax(logits, axis=1) == labels))
