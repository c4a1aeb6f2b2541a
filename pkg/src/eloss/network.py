"""Repeated-block networks with named tap points feeding entropy estimation.

A net is stem -> B structurally identical blocks -> task head.  Tap points
sit at block boundaries: when ``eloss_coverage`` >= 1 the forward pass
captures the block input plus each covered block's output, without
altering any computed value.  The captured maps are reinterpreted
channels-as-samples (n = channels, d = values per channel) so the entropy
estimators from :mod:`eloss.entropy` apply per input.

The :func:`channel_entropy` op makes that estimate differentiable: its
backward pass holds the neighbor assignment fixed and treats clamped
(near-coincident) pairs as flat, which is exactly the derivative of the
clamped value the forward pass computes.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import GradientGate, Tensor
from .entropy import (DEFAULT_EPSILON, SampleMatrix, digamma,
                      log_unit_ball_volume)
from .losses import EntropyProfile, build_profile

CHECKPOINT_VERSION = "eloss-ckpt-1"


def feature_to_samples(feature) -> SampleMatrix:
    """Reinterpret one feature map as n = C samples of dimension d.

    Accepts (C, H, W) maps (d = H*W), (C, D) matrices, or width-C vectors
    (d = 1).  Values are laid out row-major, so sample[c][h*W + w] equals
    feature[c][h][w].
    """
    values = feature.values if isinstance(feature, Tensor) else np.asarray(feature)
    if values.ndim == 1:
        values = values[:, None]
    elif values.ndim == 3:
        values = values.reshape(values.shape[0], -1)
    elif values.ndim != 2:
        raise ValueError(f"expected 1-3 dims (C / C,D / C,H,W), got shape {values.shape}")
    if values.shape[0] < 2:
        raise ValueError(f"need at least 2 channels to form samples, got {values.shape[0]}")
    return SampleMatrix(values)


def channel_entropy(x, k: int = 1, epsilon: float = DEFAULT_EPSILON) -> Tensor:
    """Per-sample k-NN entropy of a batched feature map, differentiable.

    ``x`` has shape (B, C, ...); each sample's channels form the n = C
    rows of a sample matrix of dimension d = prod(...) or 1.  Returns a
    (B,) tensor of entropies matching ``entropy_kl`` per sample (to
    ~1e-6; this op computes distances via the Gram matrix for speed).

    Backward distributes +/- (d/n)(x_i - x_j)/||x_i - x_j||^2 to the
    endpoints of each fixed k-th-neighbor pair; pairs clamped to the
    epsilon floor sit on the flat part of the clamped objective and
    contribute zero gradient.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.values.ndim < 2:
        raise ValueError(f"need a batched feature map, got shape {x.values.shape}")
    bsz, c = x.values.shape[:2]
    if c < 2:
        raise ValueError(f"need at least 2 channels, got {c}")
    if not 1 <= k <= c - 1:
        raise ValueError(f"k must be in 1..{c - 1}, got {k}")
    d = int(np.prod(x.values.shape[2:])) if x.values.ndim > 2 else 1
    xs = x.values.reshape(bsz, c, d)

    if d <= 64:
        # exact pairwise differences: cheap at small d, no cancellation
        diff = xs[:, :, None, :] - xs[:, None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
    else:
        # Gram-based distances: avoids the large (B,C,C,d) temporary;
        # cancellation error ~1e-9 relative is fine at this scale
        sq = np.einsum("bcd,bcd->bc", xs, xs)
        dist = np.sqrt(np.maximum(sq[:, :, None] + sq[:, None, :]
                                  - 2.0 * (xs @ xs.transpose(0, 2, 1)), 0.0))
    eye = np.arange(c)
    dist[:, eye, eye] = np.inf

    order = np.argsort(dist, axis=-1, kind="stable")
    nbr = order[:, :, k - 1]
    r = np.take_along_axis(dist, nbr[:, :, None], axis=-1)[:, :, 0]

    log_sums = np.sum(np.log(np.maximum(np.sort(r, axis=-1), epsilon)), axis=-1)
    const = -digamma(k) + digamma(c) + log_unit_ball_volume(d)
    out_values = const + (d / c) * log_sums

    def bw(g):
        xj = np.take_along_axis(xs, nbr[:, :, None], axis=1)
        dvec = xs - xj
        r2 = np.sum(dvec * dvec, axis=-1)
        live = r >= epsilon
        r2_safe = np.where(live, r2, 1.0)
        contrib = (d / c) * dvec / r2_safe[:, :, None]
        contrib *= (live * g[:, None])[:, :, None]
        gx = contrib.copy()
        flat_j = (np.arange(bsz)[:, None] * c + nbr).ravel()
        np.subtract.at(gx.reshape(bsz * c, d), flat_j, contrib.reshape(bsz * c, d))
        _acc = ad._accumulate
        _acc(x, gx.reshape(x.values.shape))

    return ad._from_op(out_values, (x,), bw)


# -- layers ---------------------------------------------------------------

def _he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.w = Tensor(_he_uniform(rng, (in_dim, out_dim), in_dim), requires_grad=True)
        self.b = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.w), self.b)

    def params(self):
        return {"w": self.w, "b": self.b}


class Conv2d:
    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator,
                 kernel: int = 3, padding: int = 1):
        fan_in = in_ch * kernel * kernel
        self.w = Tensor(_he_uniform(rng, (out_ch, in_ch, kernel, kernel), fan_in),
                        requires_grad=True)
        self.b = Tensor(np.zeros(out_ch), requires_grad=True)
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.w, self.b, padding=self.padding)

    def params(self):
        return {"w": self.w, "b": self.b}


@dataclass
class TapPoint:
    """A captured block-boundary output; index 0 is the block input."""

    name: str
    block_index: int
    captured: Tensor


class RepeatedBlockNet:
    """Stem -> B identical blocks -> head, with entropy taps at block edges.

    ``arch`` is ``'conv'`` (2 conv layers of ``width`` channels per block,
    ReLU after each, global average pool head) or ``'mlp'`` (2 linear
    layers of ``width`` units per block).  All blocks share identical
    layer shapes.  ``eloss_coverage`` in 0..B selects how many block
    outputs are tapped; coverage c >= 1 yields c + 1 taps (block input
    plus each covered output), coverage 0 yields none.
    """

    def __init__(self, arch: str, in_shape, n_classes: int, blocks: int = 3,
                 width: int | None = None, layers_per_block: int = 2,
                 eloss_coverage: int = 0, seed: int = 0):
        if arch not in ("conv", "mlp"):
            raise ValueError(f"unknown arch {arch!r}")
        if not 0 <= eloss_coverage <= blocks:
            raise ValueError(f"eloss_coverage must be in 0..{blocks}, got {eloss_coverage}")
        self.arch = arch
        self.in_shape = tuple(int(s) for s in (in_shape if np.iterable(in_shape) else (in_shape,)))
        self.n_classes = int(n_classes)
        self.n_blocks = int(blocks)
        self.width = int(width if width is not None else (16 if arch == "conv" else 32))
        self.layers_per_block = int(layers_per_block)
        self.eloss_coverage = int(eloss_coverage)
        self.seed = int(seed)
        self.stem_gate = GradientGate(open=True)
        rng = np.random.default_rng(seed)
        if arch == "conv":
            c_in = self.in_shape[0]
            self.stem = [Conv2d(c_in, self.width, rng)]
            self.blocks = [[Conv2d(self.width, self.width, rng)
                            for _ in range(layers_per_block)]
                           for _ in range(blocks)]
            self.head = [Linear(self.width, n_classes, rng)]
        else:
            d_in = self.in_shape[0]
            self.stem = [Linear(d_in, self.width, rng)]
            self.blocks = [[Linear(self.width, self.width, rng)
                            for _ in range(layers_per_block)]
                           for _ in range(blocks)]
            self.head = [Linear(self.width, n_classes, rng)]

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for li, layer in enumerate(self.stem):
            for pname, p in layer.params().items():
                out[f"stem.{li}.{pname}"] = p
        for bi, block in enumerate(self.blocks):
            for li, layer in enumerate(block):
                for pname, p in layer.params().items():
                    out[f"block{bi + 1}.{li}.{pname}"] = p
        for li, layer in enumerate(self.head):
            for pname, p in layer.params().items():
                out[f"head.{li}.{pname}"] = p
        return out

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    def _check_input(self, x: Tensor):
        expect = self.in_shape
        if x.values.ndim != len(expect) + 1 or x.values.shape[1:] != expect:
            raise ValueError(
                f"input shape {x.values.shape} does not match (batch, *{expect})")

    def forward(self, x, coverage: int | None = None) -> tuple[Tensor, list[TapPoint]]:
        """Run the net on a batch; returns (logits, taps at covered edges)."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        self._check_input(x)
        cov = self.eloss_coverage if coverage is None else int(coverage)
        if not 0 <= cov <= self.n_blocks:
            raise ValueError(f"coverage must be in 0..{self.n_blocks}, got {cov}")
        h = x
        for layer in self.stem:
            h = ad.relu(layer(h))
        taps: list[TapPoint] = []
        if cov >= 1:
            h = ad.gate(h, self.stem_gate)
            taps.append(TapPoint("input", 0, h))
        for bi, block in enumerate(self.blocks):
            for layer in block:
                h = ad.relu(layer(h))
            if bi < cov:
                taps.append(TapPoint(f"block{bi + 1}", bi + 1, h))
        if self.arch == "conv":
            h = ad.mean(h, axis=(2, 3))
        for layer in self.head:
            h = layer(h)
        return h, taps


def forward(net: RepeatedBlockNet, x, coverage: int | None = None):
    return net.forward(x, coverage=coverage)


def profile_from_taps(taps, k: int = 1,
                      epsilon: float = DEFAULT_EPSILON) -> EntropyProfile:
    """Entropy profile of one forward pass, in tap (block) order.

    Metric mode: applies channels-as-samples entropy estimation to each
    captured map.  Taps must come from a single input (batch size 1 or
    unbatched captures) and be ordered by strictly increasing block index.
    """
    profiles = per_sample_profiles(taps, k=k, epsilon=epsilon)
    if len(profiles) != 1:
        raise ValueError(f"per-input taps required, got batch of {len(profiles)}")
    return profiles[0]


def per_sample_profiles(taps, k: int = 1,
                        epsilon: float = DEFAULT_EPSILON) -> list[EntropyProfile]:
    """One entropy profile per sample in a batch of captured taps."""
    from .entropy import entropy_kl

    taps = list(taps)
    if len(taps) < 2:
        raise ValueError(f"need at least 2 taps, got {len(taps)}")
    indices = [t.block_index for t in taps]
    if any(nxt <= prev for prev, nxt in zip(indices, indices[1:])):
        raise ValueError(f"tap block indices must strictly increase, got {indices}")
    names = [t.name for t in taps]
    batches = [_captured_batch(t) for t in taps]
    expect = len(batches[0])
    if any(len(b) != expect for b in batches):
        raise ValueError("taps disagree on batch size")
    per_tap = [[entropy_kl(feature_to_samples(sample), k=k, epsilon=epsilon).value
                for sample in batch]
               for batch in batches]
    return [build_profile([col[b] for col in per_tap], names) for b in range(expect)]


def _captured_batch(tap: TapPoint) -> np.ndarray:
    values = tap.captured.values if isinstance(tap.captured, Tensor) else np.asarray(tap.captured)
    # (B, C, H, W) conv maps or (B, C) linear features; per-sample maps are 3-/1-D
    if values.ndim in (2, 4):
        return values
    return values[None]


# -- checkpoints ----------------------------------------------------------

def save_checkpoint(net: RepeatedBlockNet, path):
    """Write parameters as JSON: layer name -> shape + base64 float64 bytes."""
    doc = {"version": CHECKPOINT_VERSION}
    for name, p in net.parameters().items():
        buf = np.ascontiguousarray(p.values, dtype="<f8").tobytes()
        doc[name] = {"shape": list(p.values.shape),
                     "values": base64.b64encode(buf).decode("ascii")}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(net: RepeatedBlockNet, path):
    """Load parameters saved by :func:`save_checkpoint` into ``net``."""
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.pop("version", None)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    params = net.parameters()
    if set(doc) != set(params):
        raise ValueError("checkpoint layers do not match the network")
    for name, entry in doc.items():
        values = np.frombuffer(base64.b64decode(entry["values"]), dtype="<f8")
        values = values.reshape(entry["shape"]).astype(np.float64)
        if values.shape != params[name].values.shape:
            raise ValueError(f"shape mismatch for {name}")
        params[name].values = values.copy()
    return net
