"""Finite-difference verification of every differentiable op and the full model.

Each case builds a scalar loss from freshly seeded random inputs, then
compares reverse-mode gradients against central differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as tn
from .model import ForwardContext, ModelConfig, forward, init_params
from .tensor import Tensor

TOLERANCE = 1e-4
STEP = 1e-5


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    passed: bool


def _t(rng, *shape, name=None, offset=0.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) + offset, requires_grad=True, name=name)


def _away_from_zero(rng, *shape, name=None) -> Tensor:
    # keeps relu/log inputs clear of the kink by more than the step size
    x = rng.uniform(0.2, 1.5, shape) * rng.choice([-1.0, 1.0], shape)
    return Tensor(x, requires_grad=True, name=name)


def op_cases(rng: np.random.Generator) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    """Named ``(loss_fn, inputs)`` pairs, one per differentiable op."""
    cases = {}

    def add(name, build, inputs):
        w = np.random.default_rng(rng.integers(1 << 31))
        probe = build()
        weights = Tensor(w.standard_normal(probe.shape))
        cases[name] = (lambda: tn.sum(tn.mul(build(), weights)), inputs)

    a, b = _t(rng, 3, 4), _t(rng, 3, 4)
    add("add", lambda: tn.add(a, b), [a, b])
    a2, b2 = _t(rng, 3, 4), _t(rng, 4)
    add("add_broadcast", lambda: tn.add(a2, b2), [a2, b2])
    a3, b3 = _t(rng, 3, 4), _t(rng, 3, 4)
    add("sub", lambda: tn.sub(a3, b3), [a3, b3])
    a4, b4 = _t(rng, 2, 3), _t(rng, 2, 3)
    add("mul", lambda: tn.mul(a4, b4), [a4, b4])
    a5 = _t(rng, 5)
    add("scale", lambda: tn.scale(a5, -1.7), [a5])
    a6 = _t(rng, 3, 3)
    add("tanh", lambda: tn.tanh(a6), [a6])
    a7 = _away_from_zero(rng, 4, 3)
    add("relu", lambda: tn.relu(a7), [a7])
    a8 = Tensor(rng.uniform(0.5, 2.0, (4,)), requires_grad=True)
    add("log", lambda: tn.log(a8), [a8])
    a9 = _t(rng, 6, 5)
    add("dropout", lambda: tn.dropout(a9, 0.3, (7, 1, 2), training=True), [a9])
    a10 = _t(rng, 2, 6)
    add("reshape", lambda: tn.reshape(a10, (3, 4)), [a10])
    a11 = _t(rng, 2, 3, 4)
    add("transpose", lambda: tn.transpose(a11, (2, 0, 1)), [a11])
    a12 = _t(rng, 2, 3, 4)
    add("swapaxes", lambda: tn.swapaxes(a12, 0, 2), [a12])
    a13, b13 = _t(rng, 2, 3), _t(rng, 2, 2)
    add("concat", lambda: tn.concat([a13, b13], axis=1), [a13, b13])
    a14 = _t(rng, 4, 3)
    add("take", lambda: tn.take(a14, [2, 0, 2], axis=0), [a14])
    a15 = _t(rng, 3, 4)
    add("pick", lambda: tn.pick(a15, [1, 3, 0]), [a15])
    a16 = _t(rng, 3, 4)
    add("sum_axis", lambda: tn.sum(a16, axis=1), [a16])
    a17 = _t(rng, 3, 4, 2)
    add("mean_axis", lambda: tn.mean(a17, axis=1), [a17])
    a18, b18 = _t(rng, 3, 4), _t(rng, 4, 2)
    add("matmul", lambda: tn.matmul(a18, b18), [a18, b18])
    a19, b19 = _t(rng, 2, 3, 4), _t(rng, 2, 4, 2)
    add("matmul_batched", lambda: tn.matmul(a19, b19), [a19, b19])
    x20, w20, bb20 = _t(rng, 2, 3, 4), _t(rng, 4, 5), _t(rng, 5)
    add("linear", lambda: tn.linear(x20, w20, bb20), [x20, w20, bb20])
    a21 = _t(rng, 3, 4)
    add("softmax", lambda: tn.softmax(a21, axis=-1), [a21])
    a22 = _t(rng, 3, 4)
    add("softmax_axis0", lambda: tn.softmax(a22, axis=0), [a22])
    x23 = _t(rng, 3, 5)
    g23, bb23 = _t(rng, 5, offset=1.0), _t(rng, 5)
    add("layer_norm", lambda: tn.layer_norm(x23, g23, bb23), [x23, g23, bb23])
    q, k, v = _t(rng, 2, 4, 6), _t(rng, 2, 4, 6), _t(rng, 2, 4, 6)
    add("attention", lambda: tn.attention(q, k, v, heads=2)[0], [q, k, v])
    logits = _t(rng, 4, 3)
    labels = rng.integers(0, 3, 4)
    cases["cross_entropy"] = (
        lambda: tn.scale(tn.mean(tn.log(tn.pick(tn.softmax(logits, -1), labels))), -1.0),
        [logits],
    )
    return cases


def model_case(rng: np.random.Generator, n_communities: int = 3, windows: int = 4, d: int = 8,
               heads: int = 2, layers: int = 1, batch: int = 2):
    """Cross-entropy of the full forward pass, differentiated w.r.t. every parameter.

    Runs in training mode so the dropout sites are part of the checked function.
    """
    cfg = ModelConfig(d=d, heads=heads, layers=layers, fusion_layers=1, dropout=0.1)
    params = init_params(cfg, seed=int(rng.integers(1 << 31)))
    n_paths = n_communities * (n_communities - 1) // 2
    w = rng.uniform(-1.0, 1.0, (batch, n_paths, windows))
    labels = rng.integers(0, cfg.num_classes, batch)
    ctx = ForwardContext(training=True, seed=int(rng.integers(1 << 31)), step=0)
    for name, p in params.items():
        p.name = name

    def loss():
        probs = forward(w, params, cfg, ctx)
        return tn.scale(tn.mean(tn.log(tn.pick(probs, labels))), -1.0)

    return loss, list(params.values())


def run(seed: int = 0, n_communities: int = 3, windows: int = 4, d: int = 8, heads: int = 2,
        layers: int = 1, h: float = STEP, tol: float = TOLERANCE) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for name, (fn, inputs) in op_cases(rng).items():
        errs = tn.check_gradients(fn, inputs, h)
        worst = max(errs.values())
        results.append(CheckResult(name, worst, worst < tol))
    fn, inputs = model_case(rng, n_communities, windows, d, heads, layers)
    errs = tn.check_gradients(fn, inputs, h)
    for pname in sorted(errs):
        results.append(CheckResult(f"model:{pname}", errs[pname], errs[pname] < tol))
    return results
