"""Post-hoc analysis: curve volatility metrics and the anomaly report.

The curve metrics quantify a training curve's peak (``max_metric``) and
smoothness.  Two smoothness variants are kept side by side: the printed
mean-absolute-value-slope formula ``mavp_literal`` telescopes to
(|x_last| - |x_first|) / N and so measures net drift, while ``mavp_abs``
takes the absolute value of each slope term and measures volatility.
Reports show both, with ``mavp_abs`` as the headline number.

The anomaly report contrasts two per-input indicators under input noise:
mean maximum class probability (confidence) and the entropy-profile
instability score (metric-mode Eloss), each summarized as a percent
change against the clean condition.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .datasets import DatasetHandle, NoiseSpec, inject_noise
from .entropy import DEFAULT_EPSILON
from .losses import eloss_metric
from .network import RepeatedBlockNet, per_sample_profiles


class InsufficientDataError(ValueError):
    """Curve has too few points for the requested metric."""


class UndefinedBaselineError(ValueError):
    """Percent change against a zero baseline is undefined."""


@dataclass(frozen=True)
class Curve:
    """An ordered metric curve: strictly increasing steps, finite values."""

    steps: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        steps = tuple(int(s) for s in self.steps)
        values = tuple(float(v) for v in self.values)
        if len(steps) != len(values):
            raise ValueError("steps and values length mismatch")
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("steps must strictly increase")
        if not all(np.isfinite(values)):
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values) -> "Curve":
        return cls(steps=tuple(range(len(values))), values=tuple(values))

    @classmethod
    def from_csv(cls, path) -> "Curve":
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(steps=tuple(int(r[0]) for r in rows),
                   values=tuple(float(r[1]) for r in rows))


def mavp_literal(curve: Curve) -> float:
    """Mean absolute-value slope, exactly as printed:

        (1/N) * sum_k (|x_{k+1}| - |x_k|)

    which telescopes to (|x_{N+1}| - |x_1|) / N: net drift of |x|, not
    volatility.  Kept alongside :func:`mavp_abs` for comparison.
    """
    v = _curve_values(curve, minimum=2)
    a = np.abs(v)
    return float(np.sum(a[1:] - a[:-1]) / (len(v) - 1))


def mavp_abs(curve: Curve) -> float:
    """Volatility variant: (1/N) * sum_k | |x_{k+1}| - |x_k| |.

    Always >= |mavp_literal|; zero only for curves with constant |x|.
    This is the default reported smoothness number.
    """
    v = _curve_values(curve, minimum=2)
    a = np.abs(v)
    return float(np.sum(np.abs(a[1:] - a[:-1])) / (len(v) - 1))


def max_metric(curve: Curve) -> float:
    """Maximum value over the curve."""
    v = _curve_values(curve, minimum=1)
    return float(np.max(v))


def _curve_values(curve: Curve, minimum: int) -> np.ndarray:
    v = np.asarray(curve.values, dtype=np.float64)
    if len(v) < minimum:
        raise InsufficientDataError(f"need >= {minimum} points, got {len(v)}")
    return v


def percent_change(clean_mean: float, noisy_mean: float) -> float:
    """100 * (noisy - clean) / clean; undefined when clean is zero."""
    if clean_mean == 0.0:
        raise UndefinedBaselineError("percent change against a zero baseline")
    return 100.0 * (noisy_mean - clean_mean) / clean_mean


def confidence(net: RepeatedBlockNet, x) -> float:
    """Mean over the batch of the maximum class probability."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    logits, _ = net.forward(x, coverage=0)
    z = logits.values - logits.values.max(axis=1, keepdims=True)
    probs = np.exp(z)
    probs /= probs.sum(axis=1, keepdims=True)
    return float(np.mean(probs.max(axis=1)))


def eloss_metric_values(net: RepeatedBlockNet, x, k: int = 1,
                        epsilon: float = DEFAULT_EPSILON,
                        batch_size: int = 64) -> np.ndarray:
    """Per-input instability scores, tapping every block boundary."""
    x = np.asarray(x, dtype=np.float64)
    scores = []
    for start in range(0, len(x), batch_size):
        batch = Tensor(x[start:start + batch_size])
        _, taps = net.forward(batch, coverage=net.n_blocks)
        profiles = per_sample_profiles(taps, k=k, epsilon=epsilon)
        scores.extend(eloss_metric(p) for p in profiles)
    return np.asarray(scores)


def _batched_confidence(net: RepeatedBlockNet, x, batch_size: int = 64) -> np.ndarray:
    per_sample = []
    for start in range(0, len(x), batch_size):
        logits, _ = net.forward(Tensor(x[start:start + batch_size]), coverage=0)
        z = logits.values - logits.values.max(axis=1, keepdims=True)
        probs = np.exp(z)
        probs /= probs.sum(axis=1, keepdims=True)
        per_sample.extend(probs.max(axis=1))
    return np.asarray(per_sample)


@dataclass(frozen=True)
class AnomalyRow:
    condition: str
    mean_confidence: float
    mean_eloss_metric: float
    pct_change_confidence: float | None
    pct_change_eloss: float | None


@dataclass(frozen=True)
class AnomalyReport:
    """Clean-vs-noise comparison of confidence and metric-mode Eloss."""

    rows: tuple[AnomalyRow, ...]
    provenance: dict = field(default_factory=dict)

    def to_records(self) -> list[dict]:
        return [{"condition": r.condition,
                 "mean_confidence": r.mean_confidence,
                 "mean_eloss_metric": r.mean_eloss_metric,
                 "pct_change_confidence": r.pct_change_confidence,
                 "pct_change_eloss": r.pct_change_eloss} for r in self.rows]

    def to_json(self) -> str:
        return json.dumps({"provenance": self.provenance,
                           "rows": self.to_records()}, sort_keys=True, indent=1)

    def to_csv(self) -> str:
        lines = ["condition,mean_confidence,mean_eloss,pct_conf,pct_eloss"]
        for r in self.rows:
            pc = "-" if r.pct_change_confidence is None else repr(r.pct_change_confidence)
            pe = "-" if r.pct_change_eloss is None else repr(r.pct_change_eloss)
            lines.append(f"{r.condition},{r.mean_confidence!r},"
                         f"{r.mean_eloss_metric!r},{pc},{pe}")
        return "\n".join(lines) + "\n"


def anomaly_report(net: RepeatedBlockNet, data: DatasetHandle,
                   noise_specs: list[NoiseSpec], k: int = 1,
                   epsilon: float = DEFAULT_EPSILON, split: str = "test",
                   batch_size: int = 64) -> AnomalyReport:
    """Evaluate confidence and metric-mode Eloss under each noise condition.

    The clean condition is row 0 with exactly zero percent changes; a
    zero percent change elsewhere is reported as computed.  Percent
    changes against a zero clean mean are reported as missing (None).
    """
    if not noise_specs:
        raise ValueError("need at least one noise spec")
    x, _ = data.split(split)

    def measure(values):
        conf = float(np.mean(_batched_confidence(net, values, batch_size)))
        metric = float(np.mean(eloss_metric_values(net, values, k=k,
                                                   epsilon=epsilon,
                                                   batch_size=batch_size)))
        return conf, metric

    clean_conf, clean_metric = measure(x)
    rows = [AnomalyRow("clean", clean_conf, clean_metric, 0.0, 0.0)]
    for spec in noise_specs:
        conf, metric = measure(inject_noise(x, spec))
        rows.append(AnomalyRow(
            spec.label(), conf, metric,
            _safe_pct(clean_conf, conf), _safe_pct(clean_metric, metric)))
    provenance = {"dataset": data.name, "dataset_seed": data.seed,
                  "split": split, "k": k, "net_seed": net.seed,
                  "coverage": net.eloss_coverage}
    return AnomalyReport(rows=tuple(rows), provenance=provenance)


def _safe_pct(clean: float, noisy: float) -> float | None:
    try:
        return percent_change(clean, noisy)
    except UndefinedBaselineError:
        return None


# -- SVG emission -----------------------------------------------------------

_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def svg_line_plot(curves: dict[str, Curve], title: str = "",
                  width: int = 640, height: int = 400) -> str:
    """Deterministic static SVG with one polyline per named curve."""
    if not curves:
        raise ValueError("need at least one curve")
    pad = 50
    xs = [s for c in curves.values() for s in c.steps]
    ys = [v for c in curves.values() for v in c.values]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_span = (x_hi - x_lo) or 1
    y_span = (y_hi - y_lo) or 1

    def px(s):
        return pad + (s - x_lo) / x_span * (width - 2 * pad)

    def py(v):
        return height - pad - (v - y_lo) / y_span * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
             f'font-family="sans-serif" font-size="14">{title}</text>']
    axis = (f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
            f'y2="{height - pad}" stroke="black"/>'
            f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" '
            f'stroke="black"/>')
    parts.append(axis)
    parts.append(f'<text x="{pad}" y="{height - pad + 20}" font-family="sans-serif" '
                 f'font-size="11">{x_lo:g}</text>')
    parts.append(f'<text x="{width - pad}" y="{height - pad + 20}" text-anchor="end" '
                 f'font-family="sans-serif" font-size="11">{x_hi:g}</text>')
    parts.append(f'<text x="{pad - 5}" y="{height - pad}" text-anchor="end" '
                 f'font-family="sans-serif" font-size="11">{y_lo:.4g}</text>')
    parts.append(f'<text x="{pad - 5}" y="{pad + 4}" text-anchor="end" '
                 f'font-family="sans-serif" font-size="11">{y_hi:.4g}</text>')
    for i, (name, curve) in enumerate(curves.items()):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        points = " ".join(f"{px(s):.2f},{py(v):.2f}"
                          for s, v in zip(curve.steps, curve.values))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{points}"/>')
        parts.append(f'<text x="{width - pad + 4}" y="{pad + 14 * i + 10}" '
                     f'font-family="sans-serif" font-size="11" '
                     f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
