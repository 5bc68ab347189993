"""Central finite-difference verification of ``NetworkGraph.backward``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .functional import softmax_cross_entropy
from .graph import NetworkGraph

LossFn = Callable[[Dict[str, np.ndarray]], Tuple[float, Dict[str, np.ndarray]]]


class NondeterministicGraphError(RuntimeError):
    pass


@dataclass
class ParamCheck:
    key: str
    index: Tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    checks: List[ParamCheck] = field(default_factory=list)
    skipped_kinks: int = 0
    tolerance: float = 1e-4

    @property
    def max_rel_error(self) -> float:
        return max((c.rel_error for c in self.checks), default=0.0)

    @property
    def mean_rel_error(self) -> float:
        return float(np.mean([c.rel_error for c in self.checks])) if self.checks else 0.0

    @property
    def passed(self) -> bool:
        return bool(self.checks) and self.max_rel_error < self.tolerance

    def per_parameter(self) -> Dict[str, float]:
        out: Dict[str, float] = {}
        for c in self.checks:
            out[c.key] = max(out.get(c.key, 0.0), c.rel_error)
        return out

    def render(self) -> str:
        lines = [f"{'parameter':<16} {'checked':>7} {'max rel err':>12}"]
        counts: Dict[str, int] = {}
        for c in self.checks:
            counts[c.key] = counts.get(c.key, 0) + 1
        for key, err in self.per_parameter().items():
            lines.append(f"{key:<16} {counts[key]:>7} {err:>12.3e}")
        lines.append(f"checked {len(self.checks)} entries, skipped {self.skipped_kinks} at kinks")
        lines.append(f"max {self.max_rel_error:.3e}  mean {self.mean_rel_error:.3e}  "
                     f"tolerance {self.tolerance:g}  -> {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def relative_error(a: float, n: float, floor: float = 1e-8) -> float:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps gradients that are
    zero up to round-off from reading as large relative errors."""
    denom = max(abs(a), abs(n), floor)
    return abs(a - n) / denom if denom > 0 else 0.0


def cross_entropy_loss(targets: Dict[str, np.ndarray], weights: Optional[Dict[str, float]] = None) -> LossFn:
    weights = weights or {}

    def loss_fn(outputs):
        total, grads = 0.0, {}
        for name, t in targets.items():
            w = weights.get(name, 1.0)
            loss, g = softmax_cross_entropy(outputs[name], t)
            total += w * loss
            grads[name] = w * g
        return total, grads

    return loss_fn


def grad_check(graph: NetworkGraph, x: np.ndarray, loss_fn: LossFn, step: float = 1e-5,
               tolerance: float = 1e-4, num_params: int = 200, seed: int = 0, training: bool = False,
               analytic: Optional[Dict[str, np.ndarray]] = None, floor: float = 1e-8) -> GradCheckReport:
    """Compare analytic gradients to central differences on sampled entries.

    Entries are spread evenly over the parameter arrays. A perturbation that
    flips a ReLU mask or a pooling argmax straddles a kink where the
    derivative does not exist; such entries are skipped (counted in the
    report) and another is drawn in their place.

    ``analytic`` overrides the backward-pass gradients (used for negative
    controls).
    """
    if training and graph.stochastic_layers:
        raise NondeterministicGraphError(
            f"dropout layers {graph.stochastic_layers} make the loss random; "
            "run the check with training=False or keep=1.0 to freeze them")
    x = np.asarray(x, dtype=np.float64)

    def loss_at():
        out = graph.forward(x, training=training)
        return loss_fn(out)[0], graph.patterns()

    out = graph.forward(x, training=training)
    _, dout = loss_fn(out)
    base_patterns = graph.patterns()
    if analytic is None:
        analytic = {k: v.copy() for k, v in graph.backward(dout).items()}

    params = graph.parameters()
    # smallest arrays first so that quota they cannot use rolls over
    keys = sorted(params, key=lambda k: (params[k].size, k))
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance)
    remaining = num_params
    for i, key in enumerate(keys):
        left = len(keys) - i
        quota = remaining // left + (1 if remaining % left else 0)
        remaining -= quota
        p = params[key]
        tried = set()
        budget = p.size
        while quota > 0 and len(tried) < budget:
            flat = int(rng.integers(p.size))
            if flat in tried:
                continue
            tried.add(flat)
            idx = np.unravel_index(flat, p.shape)
            orig = p[idx]
            p[idx] = orig + step
            lp, pat_p = loss_at()
            p[idx] = orig - step
            lm, pat_m = loss_at()
            p[idx] = orig
            if not (_same(base_patterns, pat_p) and _same(base_patterns, pat_m)):
                report.skipped_kinks += 1
                continue
            numeric = (lp - lm) / (2 * step)
            a = float(analytic[key][idx])
            report.checks.append(ParamCheck(key, tuple(int(i) for i in idx), a, numeric,
                                            relative_error(a, numeric, floor)))
            quota -= 1
        remaining += quota
    graph.forward(x, training=training)
    return report


def _same(a: Dict[str, np.ndarray], b: Dict[str, np.ndarray]) -> bool:
    return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)
