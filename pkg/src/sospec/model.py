"""The predictor: learned alignment, torus Fourier features, MLP head.

Inputs are rotated into a learned frame (the alignment is the exponential
of free skew parameters, so it stays in SO(n) by construction), split into
2-d blocks, and converted to radii and torus angles. The network consumes
cosine/sine pairs of primitive frequency combinations of the angles plus
the radii. Rotation rates enter only through the resonance penalty, which
suppresses first-layer mass on features whose frequency is not orthogonal
to the rates.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import lie
from .autodiff import Tape
from .lattice import FrequencyVector, primitive_set


@dataclass
class GeneratorParams:
    """Everything the trainer learns, plus the static architecture info.

    layers hold (weight, bias) pairs for three ReLU hidden layers and a
    linear output; the first-layer input is [cos | sin | radii] with one
    cos/sin pair per primitive frequency.
    """

    n: int
    bandwidth: int
    freqs: list
    skew: np.ndarray
    rates: np.ndarray
    layers: list
    loss_kind: str = "squared-error"
    # Alignment parity: when True the frame is exp(A) times a reflection of
    # the last coordinate. Proper rotations cannot exchange a character ray
    # with its conjugate, so the two parities explore the two orientation
    # classes; the canonical det=+1 form is recovered by flipping the sign
    # of the last rotation rate.
    reflected: bool = False

    def __post_init__(self):
        if self.n % 2 != 0:
            raise ValueError(f"ambient dimension must be even, got {self.n}")
        r = self.n // 2
        self.skew = np.asarray(self.skew, dtype=np.float64)
        self.rates = np.asarray(self.rates, dtype=np.float64)
        if self.skew.shape != (self.n * (self.n - 1) // 2,):
            raise ValueError("skew parameter count does not match n")
        if self.rates.shape != (r,):
            raise ValueError("rate count does not match n/2")
        self.layers = [
            (np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
            for w, b in self.layers
        ]
        width = self.feature_dim
        for w, b in self.layers:
            if w.ndim != 2 or w.shape[0] != width or b.shape != (w.shape[1],):
                raise ValueError(f"layer shapes do not chain: {w.shape} after {width}")
            width = w.shape[1]

    @property
    def r(self):
        return self.n // 2

    @property
    def num_freqs(self):
        return len(self.freqs)

    @property
    def feature_dim(self):
        return 2 * self.num_freqs + self.r

    @property
    def out_dim(self):
        return self.layers[-1][0].shape[1]

    def freq_matrix(self):
        return np.ascontiguousarray(
            np.stack([f.as_array() for f in self.freqs]), dtype=np.float64
        )

    def copy(self):
        return GeneratorParams(
            n=self.n,
            bandwidth=self.bandwidth,
            freqs=list(self.freqs),
            skew=self.skew.copy(),
            rates=self.rates.copy(),
            layers=[(w.copy(), b.copy()) for w, b in self.layers],
            loss_kind=self.loss_kind,
            reflected=self.reflected,
        )

    def canonical_form(self):
        """The learned generator's canonical form with det(Q) = +1.

        For a reflected frame exp(A)*D the same generator is produced by
        (exp(A), rates with the last sign flipped), since D conjugates the
        last plane.
        """
        from .lie import CanonicalForm, matrix_exp, skew_from_params

        q = matrix_exp(skew_from_params(self.skew, self.n), 1.0)
        rates = self.rates.copy()
        if self.reflected:
            rates[-1] = -rates[-1]
        return CanonicalForm(q, rates)


@dataclass(frozen=True)
class FeatureBundle:
    """Features of one input: per-frequency (cos, sin) pairs and block radii."""

    freqs: tuple
    cos: np.ndarray
    sin: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        if np.any(np.abs(self.cos**2 + self.sin**2 - 1.0) > 1e-12):
            raise ValueError("character features must lie on the unit circle")

    def pair(self, freq):
        i = self.freqs.index(freq)
        return self.cos[i], self.sin[i]


def init_params(
    n,
    bandwidth,
    out_dim=1,
    hidden=64,
    seed=0,
    loss_kind="squared-error",
    first_layer_scale=0.05,
    reflected=False,
    rates_init=None,
):
    """Fresh parameters: small-skew alignment near identity, unit random
    rates (or an explicit `rates_init` direction), fan-in-scaled MLP
    weights.

    The first layer starts `first_layer_scale` times smaller than its fan-in
    scale. Feature coefficients then begin near zero, so the resonance
    penalty is inert until the prediction loss has pulled weight onto the
    features it actually needs; the rates settle into the nullspace of those
    frequencies instead of whichever direction the random init happened to
    point at.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    freqs = primitive_set(bandwidth, n // 2)
    skew = 0.1 * rng.standard_normal(n * (n - 1) // 2)
    if rates_init is None:
        rates = rng.standard_normal(n // 2)
    else:
        rates = np.asarray(rates_init, dtype=np.float64).copy()
    rates = rates / np.linalg.norm(rates)
    widths = [2 * len(freqs) + n // 2, hidden, hidden, hidden, out_dim]
    layers = []
    for i in range(len(widths) - 1):
        fan_in = widths[i]
        gain = 2.0 if i < len(widths) - 2 else 1.0
        w = rng.standard_normal((fan_in, widths[i + 1])) * np.sqrt(gain / fan_in)
        if i == 0:
            w *= first_layer_scale
        layers.append((w, np.zeros(widths[i + 1])))
    return GeneratorParams(
        n=n,
        bandwidth=bandwidth,
        freqs=freqs,
        skew=skew,
        rates=rates,
        layers=layers,
        loss_kind=loss_kind,
        reflected=reflected,
    )


def exp_skew(tape, mat_var):
    """On-tape matrix exponential; same scaling/series/squaring arithmetic
    as lie.matrix_exp so the primal matches it bit for bit."""
    squarings = lie.exp_squarings(mat_var.value)
    scaled = tape.scale(mat_var, 0.5**squarings)
    n = mat_var.value.shape[0]
    result = tape.constant(np.eye(n))
    term = tape.constant(np.eye(n))
    for k in range(1, lie.EXP_TAYLOR_ORDER + 1):
        term = tape.scale(tape.matmul(term, scaled), 1.0 / k)
        result = tape.add(result, term)
    for _ in range(squarings):
        result = tape.matmul(result, result)
    return result


def build_forward(tape, params, x):
    """Record the full forward pass for a batch; returns (prediction Var,
    dict of leaf Vars keyed by parameter name)."""
    x = np.asarray(x, dtype=np.float64)
    leaves = {}
    skew_v = leaves["skew"] = tape.param(params.skew)
    leaves["rates"] = tape.param(params.rates)
    layer_vars = []
    for i, (w, b) in enumerate(params.layers):
        wv = leaves[f"w{i}"] = tape.param(w)
        bv = leaves[f"b{i}"] = tape.param(b)
        layer_vars.append((wv, bv))

    alignment = exp_skew(tape, tape.skew_matrix(skew_v, params.n))
    aligned = tape.matmul(tape.constant(x), alignment)  # rows are Q^T x
    if params.reflected:
        flip = np.ones(params.n)
        flip[-1] = -1.0
        aligned = tape.mul(aligned, tape.constant(flip))
    radii, angles = tape.block_polar(aligned)
    cos_f, sin_f = tape.torus_features(angles, params.freq_matrix())
    h = tape.concat_cols([cos_f, sin_f, radii])
    last = len(layer_vars) - 1
    for i, (wv, bv) in enumerate(layer_vars):
        h = tape.add(tape.matmul(h, wv), bv)
        if i != last:
            h = tape.relu(h)
    return h, leaves


def build_penalty(tape, params, leaves):
    """Resonance penalty on tape: sum over frequencies of squared first-layer
    mass times the squared inner product with the rates."""
    f = params.num_freqs
    sq = tape.sum_axis(tape.square(leaves["w0"]), 1)
    csq = tape.add(tape.slice1d(sq, 0, f), tape.slice1d(sq, f, 2 * f))
    dots = tape.matmul(tape.constant(params.freq_matrix()), leaves["rates"])
    return tape.sum(tape.mul(csq, tape.square(dots)))


def build_objective(tape, params, x, y, mu, loss_kind=None):
    """Prediction loss plus mu times the resonance penalty.

    Returns (objective, prediction loss, penalty, leaves)."""
    loss_kind = loss_kind or params.loss_kind
    y = np.asarray(y, dtype=np.float64)
    pred, leaves = build_forward(tape, params, x)
    if loss_kind == "squared-error":
        diff = tape.sub(pred, tape.constant(y))
        pred_loss = tape.scale(tape.sum(tape.square(diff)), 1.0 / y.size)
    elif loss_kind == "logistic":
        pred_loss = tape.logistic_loss(pred, y)
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    penalty = build_penalty(tape, params, leaves)
    objective = tape.add(pred_loss, tape.scale(penalty, mu))
    return objective, pred_loss, penalty, leaves


def predict(params, x):
    """Model output for a batch (row per sample) or a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    pred, _ = build_forward(Tape(), params, x)
    return pred.value[0] if single else pred.value


def alignment_matrix(params):
    """The full alignment applied to inputs, including an orientation flip
    of the last coordinate for reflected-parity frames (det -1 there)."""
    q = lie.matrix_exp(lie.skew_from_params(params.skew, params.n), 1.0)
    if params.reflected:
        q = q.copy()
        q[:, -1] = -q[:, -1]
    return q


def align(params, x):
    """Inputs expressed in the learned frame (Q^T x per sample)."""
    q = alignment_matrix(params)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return q.T @ x
    return x @ q


def featurize(params, x):
    """FeatureBundle for one input vector."""
    from . import kernels

    z = align(params, x)[None, :]
    radii, angles = kernels.block_polar_fwd(np.ascontiguousarray(z))
    cos_f, sin_f = kernels.torus_fwd(angles, params.freq_matrix())
    return FeatureBundle(
        freqs=tuple(params.freqs), cos=cos_f[0], sin=sin_f[0], radii=radii[0]
    )


def coefficient_norms(params):
    """Per-frequency Euclidean norm of all first-layer weights touching the
    cos and sin channels of that frequency. Zero exactly when the feature is
    disconnected from the network."""
    w1 = params.layers[0][0]
    f = params.num_freqs
    sq = np.sum(w1 * w1, axis=1)
    csq = sq[:f] + sq[f : 2 * f]
    return {freq: float(np.sqrt(csq[i])) for i, freq in enumerate(params.freqs)}


def resonance_penalty(params):
    """Plain-numpy value of the penalty; mirrors build_penalty exactly."""
    w1 = params.layers[0][0]
    f = params.num_freqs
    sq = np.sum(w1 * w1, axis=1)
    csq = sq[:f] + sq[f : 2 * f]
    dots = params.freq_matrix() @ params.rates
    return float(np.sum(csq * (dots * dots)))


def save_checkpoint(params, path, config=None):
    doc = {
        "n": params.n,
        "bandwidth": params.bandwidth,
        "frequencies": [f.to_json() for f in params.freqs],
        "skewParams": params.skew.tolist(),
        "lambda": params.rates.tolist(),
        "layers": [{"weight": w.tolist(), "bias": b.tolist()} for w, b in params.layers],
        "lossKind": params.loss_kind,
        "reflected": params.reflected,
        "config": config or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    freqs = [FrequencyVector(tuple(m)) for m in doc["frequencies"]]
    params = GeneratorParams(
        n=doc["n"],
        bandwidth=doc["bandwidth"],
        freqs=freqs,
        skew=np.asarray(doc["skewParams"]),
        rates=np.asarray(doc["lambda"]),
        layers=[(np.asarray(l["weight"]), np.asarray(l["bias"])) for l in doc["layers"]],
        loss_kind=doc.get("lossKind", "squared-error"),
        reflected=doc.get("reflected", False),
    )
    return params, doc.get("config", {})
