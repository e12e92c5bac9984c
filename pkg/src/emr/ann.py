"""Multilayer perceptron for ADC-to-distance conversion.

The deployed net is inference-only ("frozen"): every neuron hard-binarizes
its weighted sum at 0.5, exactly like the controller's loop. Training uses
sigmoid activations instead, which is the only reading that makes the
o*(1-o) error terms of the weight-update rule non-degenerate; there are no
bias terms. Weights live in a rectangular float32 array
w[plane][neuron][connection] with unused slots pinned to zero, which is
also the external storage layout.

The per-pattern update order is sequential by design (each pattern's
backward pass sees the weights left by the previous one, and a layer's
weights are updated before that layer's error terms are computed), so
training cannot be batch-vectorized; train() runs a compiled kernel with
the same semantics as forward_pass/backward_pass.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .sensor import (ADC_MAX, DIGITAL_1BIT, SensorSpec, VREF_DEFAULT,
                     invert_voltage)

INPUT_BITS = 10
OUTPUT_BITS = 8
EEPROM_CAPACITY = 32768
IMAGE_MAGIC = b"EMRW"
IMAGE_VERSION = 0x01
PARTIAL_MARKER = 0x21  # trailing byte on images written before convergence

TRAIN_SIGMOID = "train-sigmoid"
FROZEN_THRESHOLD = "frozen-threshold"


class GeometryError(ValueError):
    """Layer widths and data shapes do not line up."""


class EepromError(ValueError):
    """Weight image is malformed or does not fit the part."""


@dataclass(frozen=True)
class NetGeometry:
    """Layer widths, input first. The rectangular storage is sized by the
    widest layer (nmax = wmax = max width)."""

    widths: tuple[int, ...]

    def __post_init__(self):
        if len(self.widths) < 2:
            raise GeometryError("need at least input and output layers")
        if any(w < 1 for w in self.widths):
            raise GeometryError(f"layer widths must be >= 1, got {self.widths}")
        if max(self.widths) > 255:
            raise GeometryError("layer width exceeds one byte")
        if len(self.widths) > 255:
            raise GeometryError("layer count exceeds one byte")

    @property
    def layer_count(self) -> int:
        return len(self.widths)

    @property
    def nmax(self) -> int:
        return max(self.widths)

    @property
    def wmax(self) -> int:
        return max(self.widths)

    @classmethod
    def for_adc(cls, hidden: Sequence[int] = (16,)) -> "NetGeometry":
        """The converter geometry: 10 ADC bits in, 8 distance bits out."""
        return cls((INPUT_BITS, *hidden, OUTPUT_BITS))

    def check_adc(self) -> "NetGeometry":
        if self.widths[0] != INPUT_BITS or self.widths[-1] != OUTPUT_BITS:
            raise GeometryError(
                f"ADC conversion needs a {INPUT_BITS}-in/{OUTPUT_BITS}-out net, "
                f"got {self.widths}")
        return self


@dataclass
class WeightMatrix:
    """Rectangular weight array plus its geometry.

    w[L, n, c] is the weight from neuron c of layer L to neuron n of
    layer L+1. Slots beyond a layer's width stay exactly zero.
    """

    geometry: NetGeometry
    w: np.ndarray
    sensor_model: str = ""

    def __post_init__(self):
        g = self.geometry
        expected = (g.layer_count - 1, g.nmax, g.wmax)
        if self.w.shape != expected:
            raise GeometryError(f"weight array {self.w.shape}, expected {expected}")
        if self.w.dtype != np.float32:
            raise GeometryError("weights are stored as float32")
        if not np.all(np.isfinite(self.w)):
            raise GeometryError("weights must be finite")

    def copy(self) -> "WeightMatrix":
        return WeightMatrix(self.geometry, self.w.copy(), self.sensor_model)


@dataclass
class Activations:
    """Per-layer neuron outputs and error terms from one pattern."""

    o: np.ndarray
    err: np.ndarray
    target: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, geometry: NetGeometry) -> "Activations":
        shape = (geometry.layer_count, geometry.nmax)
        return cls(o=np.zeros(shape, np.float32), err=np.zeros(shape, np.float32))


def init_weights(geometry: NetGeometry, seed: Optional[int] = 0,
                 sensor_model: str = "") -> WeightMatrix:
    """Seeded uniform [-0.5, 0.5] init on the real slots, zeros elsewhere."""
    rng = np.random.default_rng(seed)
    w = np.zeros((geometry.layer_count - 1, geometry.nmax, geometry.wmax), np.float32)
    for L in range(geometry.layer_count - 1):
        wi, wo = geometry.widths[L], geometry.widths[L + 1]
        w[L, :wo, :wi] = rng.uniform(-0.5, 0.5, size=(wo, wi)).astype(np.float32)
    return WeightMatrix(geometry, w, sensor_model)


# ---------------------------------------------------------------------------
# forward / backward passes

def forward_pass(w: WeightMatrix, input_bits, mode: str = FROZEN_THRESHOLD,
                 acts: Optional[Activations] = None) -> tuple[np.ndarray, Activations]:
    """Layer-by-layer weighted sums.

    frozen-threshold binarizes every neuron at 0.5 (the controller pass);
    train-sigmoid applies 1/(1+e^-x) and is the pass the backward rule
    expects. Returns (output layer values, activations).
    """
    g = w.geometry
    x = np.asarray(input_bits, dtype=np.float32)
    if x.shape != (g.widths[0],):
        raise GeometryError(f"input shape {x.shape}, expected ({g.widths[0]},)")
    if mode not in (TRAIN_SIGMOID, FROZEN_THRESHOLD):
        raise ValueError(f"unknown mode {mode!r}")
    if acts is None:
        acts = Activations.zeros(g)
    o = acts.o
    o.fill(0.0)
    o[0, :g.widths[0]] = x
    for L in range(g.layer_count - 1):
        wi, wo = g.widths[L], g.widths[L + 1]
        z = w.w[L, :wo, :wi] @ o[L, :wi]
        if mode == TRAIN_SIGMOID:
            o[L + 1, :wo] = 1.0 / (1.0 + np.exp(-z))
        else:
            o[L + 1, :wo] = (z >= 0.5).astype(np.float32)
    out = o[g.layer_count - 1, :g.widths[-1]].copy()
    return out, acts


def backward_pass(w: WeightMatrix, acts: Activations, target,
                  eta: float = 1.0) -> WeightMatrix:
    """One weight update from activations of a train-sigmoid forward pass.

    Output error is o*(1-o)*(target-o); walking down the net, each plane's
    weights are updated before that layer's error terms are computed from
    them, preserving the reference loop order.
    """
    g = w.geometry
    t = np.asarray(target, dtype=np.float32)
    if t.shape != (g.widths[-1],):
        raise GeometryError(f"target shape {t.shape}, expected ({g.widths[-1]},)")
    eta32 = np.float32(eta)
    o, err = acts.o, acts.err
    err.fill(0.0)
    acts.target = t
    top = g.layer_count - 1
    o_top = o[top, :g.widths[top]]
    err[top, :g.widths[top]] = o_top * (1.0 - o_top) * (t - o_top)
    for L in range(g.layer_count - 2, -1, -1):
        wi, wo = g.widths[L], g.widths[L + 1]
        w.w[L, :wo, :wi] += eta32 * np.outer(err[L + 1, :wo], o[L, :wi])
        if L > 0:
            back = w.w[L, :wo, :wi].T @ err[L + 1, :wo]
            err[L, :wi] = back * o[L, :wi] * (1.0 - o[L, :wi])
    return w


@numba.njit(cache=True)
def _train_kernel(w, widths, inputs, targets, eta, max_epochs):  # pragma: no cover
    lmax = widths.shape[0]
    nmax = w.shape[1]
    npat = inputs.shape[0]
    o = np.zeros((lmax, nmax), np.float32)
    err = np.zeros((lmax, nmax), np.float32)
    hist = np.empty(max_epochs, np.int64)
    epochs_run = 0
    for ep in range(max_epochs):
        bit_errors = 0
        for p in range(npat):
            for i in range(widths[0]):
                o[0, i] = inputs[p, i]
            for L in range(lmax - 1):
                for n in range(widths[L + 1]):
                    s = np.float32(0.0)
                    for c in range(widths[L]):
                        s += o[L, c] * w[L, n, c]
                    o[L + 1, n] = np.float32(1.0) / (np.float32(1.0) + np.exp(-s))
            top = lmax - 1
            for n in range(widths[top]):
                on = o[top, n]
                tn = targets[p, n]
                if (on >= np.float32(0.5)) != (tn >= np.float32(0.5)):
                    bit_errors += 1
                err[top, n] = on * (np.float32(1.0) - on) * (tn - on)
            for L in range(lmax - 2, -1, -1):
                for n in range(widths[L + 1]):
                    e = eta * err[L + 1, n]
                    for c in range(widths[L]):
                        w[L, n, c] += e * o[L, c]
                if L > 0:
                    for n in range(widths[L]):
                        s = np.float32(0.0)
                        for c in range(widths[L + 1]):
                            s += err[L + 1, c] * w[L, c, n]
                        err[L, n] = s * o[L, n] * (np.float32(1.0) - o[L, n])
        hist[ep] = bit_errors
        epochs_run = ep + 1
        if bit_errors == 0:
            break
    return hist[:epochs_run]


def train(ts: "TrainingSet", geometry: NetGeometry, eta: float = 1.0,
          epochs: int = 1000, seed: Optional[int] = 0) -> tuple[WeightMatrix, list[int]]:
    """Sequential per-pattern backprop over the whole set, each epoch.

    Returns the weights and the per-epoch output-bit-error history;
    stops early once an epoch completes with zero bit errors.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if ts.inputs.shape[1] != geometry.widths[0] or ts.targets.shape[1] != geometry.widths[-1]:
        raise GeometryError(
            f"training set is {ts.inputs.shape[1]}-in/{ts.targets.shape[1]}-out, "
            f"geometry wants {geometry.widths[0]}/{geometry.widths[-1]}")
    w = init_weights(geometry, seed, ts.sensor_model)
    widths = np.asarray(geometry.widths, np.int64)
    inputs = np.ascontiguousarray(ts.inputs, dtype=np.float32)
    targets = np.ascontiguousarray(ts.targets, dtype=np.float32)
    hist = _train_kernel(w.w, widths, inputs, targets, np.float32(eta), epochs)
    return w, [int(h) for h in hist]


# ---------------------------------------------------------------------------
# training data

@dataclass
class TrainingSet:
    """All 1024 ADC codes with their 8-bit distance-class targets."""

    inputs: np.ndarray   # (1024, 10) uint8, code bits MSB first
    targets: np.ndarray  # (1024, 8) uint8, class bits MSB first
    classes: np.ndarray  # (1024,) uint16 distance class in cm
    class_counts: dict = field(default_factory=dict)
    sensor_model: str = ""


def adc_to_bits(code: int) -> np.ndarray:
    """10 input bits, MSB first."""
    if not 0 <= code <= ADC_MAX:
        raise ValueError(f"ADC code {code} outside 0..{ADC_MAX}")
    return np.array([(code >> (INPUT_BITS - 1 - i)) & 1 for i in range(INPUT_BITS)],
                    dtype=np.uint8)


def bits_to_distance(bits) -> int:
    """Concatenate 8 output bits, MSB first, into centimeters."""
    value = 0
    for i, b in enumerate(bits):
        value |= (1 if b >= 0.5 else 0) << (OUTPUT_BITS - 1 - i)
    return value


def generate_training_data(spec: SensorSpec, resolution: float = 1.0) -> TrainingSet:
    """Invert the noise-free transfer curve for every ADC code.

    Codes outside the falling branch (near field, beyond max range, no
    echo) collapse to class 0, which the map builder treats as "no
    obstacle". Valid distances are rounded to the class resolution.
    """
    if spec.output_kind == DIGITAL_1BIT:
        raise GeometryError(f"{spec.model} is a threshold switch, not a ranger")
    if resolution <= 0 or abs(resolution - round(resolution)) > 1e-12:
        raise ValueError("class resolution must be a whole number of cm")
    if spec.max_range_cm > 255:
        raise GeometryError("distance classes beyond 255 cm do not fit 8 bits")
    inputs = np.zeros((ADC_MAX + 1, INPUT_BITS), np.uint8)
    targets = np.zeros((ADC_MAX + 1, OUTPUT_BITS), np.uint8)
    classes = np.zeros(ADC_MAX + 1, np.uint16)
    for code in range(ADC_MAX + 1):
        volts = code * VREF_DEFAULT / ADC_MAX
        d = invert_voltage(spec, volts)
        cls = 0 if d is None else int(round(d / resolution)) * int(resolution)
        inputs[code] = adc_to_bits(code)
        classes[code] = cls
        for i in range(OUTPUT_BITS):
            targets[code, i] = (cls >> (OUTPUT_BITS - 1 - i)) & 1
    values, counts = np.unique(classes, return_counts=True)
    return TrainingSet(inputs=inputs, targets=targets, classes=classes,
                       class_counts={int(v): int(c) for v, c in zip(values, counts)},
                       sensor_model=spec.model)


def infer_distance(w: WeightMatrix, adc: int) -> int:
    """Frozen forward pass: ADC code in, centimeters out (0 = invalid)."""
    w.geometry.check_adc()
    out, _ = forward_pass(w, adc_to_bits(adc), FROZEN_THRESHOLD)
    return bits_to_distance(out)


def synthesize_weights(spec: SensorSpec, resolution: float = 1.0) -> WeightMatrix:
    """Program the code-to-class staircase directly as threshold logic.

    The frozen pass is a cascade of linear threshold units, so an exact
    converter can be written down instead of trained: one comparator per
    class-run boundary ("code >= B", binary-weighted inputs scaled so the
    fixed 0.5 threshold lands on the boundary), one interval unit per run
    (comparator AND NOT next-comparator) and one OR unit per output bit.
    This is the calibration path for flashing exact converter images; the
    result still runs through the ordinary frozen forward pass. Sensors
    with many distance classes exceed the storage part's capacity, which
    serialize_weights will reject.
    """
    ts = generate_training_data(spec, resolution)
    runs: list[tuple[int, int]] = []  # (first code of run, class value)
    prev_cls = 0
    for code in range(ADC_MAX + 1):
        cls = int(ts.classes[code])
        if cls and cls != prev_cls:
            runs.append((code, cls))
        prev_cls = cls
    if not runs:
        raise GeometryError(f"{spec.model} yields no valid distance classes")
    last_valid = max(code for code in range(ADC_MAX + 1) if ts.classes[code])
    boundaries = [start for start, _ in runs] + [last_valid + 1]
    n_comp, n_runs = len(boundaries), len(runs)
    geometry = NetGeometry((INPUT_BITS, n_comp, n_runs, OUTPUT_BITS))
    w = np.zeros((3, geometry.nmax, geometry.wmax), np.float32)
    for j, boundary in enumerate(boundaries):
        scale = 0.5 / (boundary - 0.5)
        for i in range(INPUT_BITS):
            w[0, j, i] = scale * (1 << (INPUT_BITS - 1 - i))
    for r in range(n_runs):
        w[1, r, r] = 1.0
        w[1, r, r + 1] = -1.0
    for r, (_, cls) in enumerate(runs):
        for b in range(OUTPUT_BITS):
            if (cls >> (OUTPUT_BITS - 1 - b)) & 1:
                w[2, b, r] = 1.0
    return WeightMatrix(geometry, w, spec.model)


def classify_all(w: WeightMatrix) -> np.ndarray:
    """Frozen-pass distance class for every ADC code (batch, same math)."""
    w.geometry.check_adc()
    g = w.geometry
    codes = np.arange(ADC_MAX + 1)
    o = np.zeros((ADC_MAX + 1, g.widths[0]), np.float32)
    for i in range(INPUT_BITS):
        o[:, i] = (codes >> (INPUT_BITS - 1 - i)) & 1
    for L in range(g.layer_count - 1):
        wi, wo = g.widths[L], g.widths[L + 1]
        o = (o @ w.w[L, :wo, :wi].T >= 0.5).astype(np.float32)
    weights = 1 << np.arange(OUTPUT_BITS - 1, -1, -1)
    return (o.astype(np.int64) * weights).sum(axis=1)


# ---------------------------------------------------------------------------
# weight image (external storage)

def serialize_weights(w: WeightMatrix) -> bytes:
    """Pack a weight matrix into the external storage image.

    Layout: magic "EMRW", version 0x01, sensor model name (11 bytes,
    zero-padded ASCII), layer count, nmax, wmax (1 byte each), per-layer
    widths, then float32 little-endian weights in [plane][neuron][connection]
    order including the zero padding. Must fit the 32768-byte part.
    """
    g = w.geometry
    name = w.sensor_model.encode("ascii")
    if len(name) > 11:
        raise EepromError(f"sensor model name {w.sensor_model!r} exceeds 11 bytes")
    header = (IMAGE_MAGIC + bytes((IMAGE_VERSION,)) + name.ljust(11, b"\0")
              + bytes((g.layer_count, g.nmax, g.wmax)) + bytes(g.widths))
    image = header + np.ascontiguousarray(w.w, dtype="<f4").tobytes()
    if len(image) > EEPROM_CAPACITY:
        raise EepromError(
            f"image is {len(image)} bytes, part holds {EEPROM_CAPACITY}")
    return image


def image_size(geometry: NetGeometry) -> int:
    """Exact image size for a geometry: 19 + Lmax + 4*(Lmax-1)*nmax*wmax."""
    return 19 + geometry.layer_count + 4 * (geometry.layer_count - 1) * geometry.nmax * geometry.wmax


def image_is_partial(data: bytes) -> bool:
    """True when the image carries the non-converged warning marker."""
    if len(data) < 20 or data[:4] != IMAGE_MAGIC:
        return False
    lmax = data[16]
    try:
        base = 19 + lmax + 4 * (lmax - 1) * data[17] * data[18]
    except IndexError:
        return False
    return len(data) == base + 1 and data[-1] == PARTIAL_MARKER


def deserialize_weights(data: bytes) -> WeightMatrix:
    """Inverse of serialize_weights; tolerates the partial-image marker."""
    if len(data) < 4 or data[:4] != IMAGE_MAGIC:
        raise EepromError(f"bad magic {bytes(data[:4])!r}")
    if len(data) > EEPROM_CAPACITY + 1:
        raise EepromError(f"image is {len(data)} bytes, part holds {EEPROM_CAPACITY}")
    if len(data) < 19:
        raise EepromError("truncated image header")
    if data[4] != IMAGE_VERSION:
        raise EepromError(f"unsupported image version {data[4]}")
    name = data[5:16].rstrip(b"\0").decode("ascii", errors="replace")
    lmax, nmax, wmax = data[16], data[17], data[18]
    if lmax < 2:
        raise EepromError(f"layer count {lmax} below 2")
    if len(data) < 19 + lmax:
        raise EepromError("truncated width table")
    widths = tuple(int(b) for b in data[19:19 + lmax])
    geometry = NetGeometry(widths)
    if geometry.nmax != nmax or geometry.wmax != wmax:
        raise EepromError(
            f"padding {nmax}x{wmax} does not match widths {widths}")
    body = data[19 + lmax:]
    if image_is_partial(data):
        body = body[:-1]
    expected = 4 * (lmax - 1) * nmax * wmax
    if len(body) != expected:
        raise EepromError(f"weight block is {len(body)} bytes, expected {expected}")
    w = np.frombuffer(body, dtype="<f4").reshape(lmax - 1, nmax, wmax)
    return WeightMatrix(geometry, np.ascontiguousarray(w, dtype=np.float32), name)
