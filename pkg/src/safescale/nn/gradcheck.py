"""Central-difference verification of the analytic gradients.

Loss kinks (ReLU corners, hardtanh saturation edges) make a finite
difference meaningless for a coordinate whose perturbation crosses
them, so coordinates where the two probe points disagree on any
activation signature are skipped and replaced by further samples from
the same layer kind.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from safescale.nn.losses import get_loss
from safescale.nn.network import Network
from safescale.seeding import make_rng

H_RANGE = (1e-7, 1e-4)
REL_FLOOR = 1e-8


@dataclass
class GradCheckReport:
    tolerance: float
    h: float
    max_rel_err: float = 0.0
    per_kind: dict[str, float] = field(default_factory=dict)
    n_checked: dict[str, int] = field(default_factory=dict)
    n_skipped: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance

    def __str__(self) -> str:
        kinds = ", ".join(
            f"{k}: {v:.3e} ({self.n_checked[k]} coords)" for k, v in sorted(self.per_kind.items())
        )
        verdict = "pass" if self.passed else "FAIL"
        return (
            f"gradient check {verdict}: max rel err {self.max_rel_err:.3e} "
            f"(tol {self.tolerance:.1e}, h {self.h:.1e}, {self.n_skipped} kink-skipped) [{kinds}]"
        )


def _signature(net: Network) -> bytes:
    parts = []
    for layer in net.layers:
        sig = layer.activation_signature()
        if sig is not None:
            parts.append(sig)
    return b"".join(parts)


def gradient_check(
    net: Network,
    x: np.ndarray,
    y: np.ndarray,
    loss_kind: str,
    h: float = 1e-5,
    tolerance: float = 1e-4,
    per_kind: int = 200,
    seed: int = 0,
) -> GradCheckReport:
    """Compare backward() against (L(p+h) - L(p-h)) / 2h per coordinate.

    Checks up to ``per_kind`` randomly chosen coordinates for every
    layer kind that has parameters (all of them when a kind has fewer).
    Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
    """
    if not H_RANGE[0] <= h <= H_RANGE[1]:
        raise ValueError(f"h must lie in [{H_RANGE[0]}, {H_RANGE[1]}], got {h}")
    loss_fn, grad_fn = get_loss(loss_kind)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    out = net.forward(x, train=True, update_running=False)
    net.backward(grad_fn(out, y))
    analytic: dict[int, np.ndarray] = {}
    by_kind: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {}
    for layer in net.layers:
        for p, g in zip(layer.params(), layer.grads()):
            analytic[id(p)] = g.copy()
            by_kind.setdefault(layer.kind, []).append((p, g))

    rng = make_rng(seed)
    report = GradCheckReport(tolerance=tolerance, h=h)
    for kind, pairs in sorted(by_kind.items()):
        sizes = [p.size for p, _ in pairs]
        total = sum(sizes)
        edges = np.cumsum([0] + sizes)
        order = rng.permutation(total)
        checked = 0
        worst = 0.0
        for flat in order:
            if checked >= per_kind:
                break
            slot = int(np.searchsorted(edges, flat, side="right") - 1)
            p = pairs[slot][0]
            i = int(flat - edges[slot])
            orig = p.flat[i]
            p.flat[i] = orig + h
            lo_hi = loss_fn(net.forward(x, train=True, update_running=False), y)
            sig_hi = _signature(net)
            p.flat[i] = orig - h
            lo_lo = loss_fn(net.forward(x, train=True, update_running=False), y)
            sig_lo = _signature(net)
            p.flat[i] = orig
            if sig_hi != sig_lo:
                report.n_skipped += 1
                continue
            numeric = (lo_hi - lo_lo) / (2.0 * h)
            a = float(analytic[id(p)].flat[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), REL_FLOOR)
            worst = max(worst, rel)
            checked += 1
        report.per_kind[kind] = worst
        report.n_checked[kind] = checked
        report.max_rel_err = max(report.max_rel_err, worst)
    return report
