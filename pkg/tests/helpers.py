"""Shared test utilities: tiny random models and a finite-difference oracle."""

from __future__ import annotations

import numpy as np

from qnbm.config import ModelConfig
from qnbm.forecast import architecture
from qnbm.numkit import make_rng
from qnbm.training import pinball_loss

FD_STEP = 1e-5


def tiny_model(
    kind="qnbm",
    seed=0,
    n_f=6,
    n_z=5,
    n_u=7,
    H=3,
    levels=(0.1, 0.3, 0.5, 0.7, 0.9),
    rows=5,
    revin=False,
    factorize=True,
    rank=3,
    dropout=0.0,
    n_price=3,
):
    """Random params with every tensor perturbed away from its initial value."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(rows, n_f)) * 2 + 1
    Y = rng.normal(size=(rows, H))
    names = [f"x{i}" for i in range(n_f)]
    cfg = ModelConfig(
        kind=kind,
        n_u=n_u,
        n_z=n_z,
        rank=rank,
        factorize_w=factorize,
        factorize_v=factorize,
        revin=revin,
        quantiles=levels,
    )
    params = architecture(kind).init(cfg, X, Y, names, np.arange(n_price), make_rng(seed), dropout)
    for name, t in params.tensors.items():
        t += rng.normal(scale=0.3, size=t.shape)
    params.tensors["revin_scale"][:] = 1.3
    params.tensors["revin_shift"][:] = -0.2
    return params, X


def targets_off_kinks(out: np.ndarray, rng: np.random.Generator, margin=0.3) -> np.ndarray:
    """Targets at least ``margin`` from every predicted quantile of their cell."""
    D, H, _ = out.shape
    y = np.empty((D, H))
    for d in range(D):
        for h in range(H):
            q = np.sort(out[d, h])
            cands = [q[-1] + rng.uniform(margin, 2 * margin), q[0] - rng.uniform(margin, 2 * margin)]
            gaps = np.diff(q)
            k = int(np.argmax(gaps)) if len(gaps) else -1
            if k >= 0 and gaps[k] > 2 * margin:
                cands.append(0.5 * (q[k] + q[k + 1]))
            y[d, h] = cands[rng.integers(len(cands))]
    return y


def _objective(params, X, y, train, mask_seed):
    arch = architecture(params.kind)
    rng = make_rng(mask_seed) if train else None
    out, cache = arch.forward(params, X, train=train, rng=rng)
    loss, grad = pinball_loss(y, out, params.quantiles)
    return loss, grad, out, cache


def _pattern(cache, out, y):
    pats = [np.sign(y[..., None] - out)]
    for name in ("h1", "h2"):
        if hasattr(cache, name):
            pats.append(getattr(cache, name) > 0)
    return pats


def gradient_check(params, X, train=False, mask_seed=7, seed=0):
    """Return {tensor: (max relative error, skipped elements)}.

    Elements whose ±step perturbation flips any ReLU or pinball branch are
    skipped, since the objective is not differentiable across those kinks.
    """
    rng = np.random.default_rng(seed)
    out, _ = architecture(params.kind).forward(params, X, train=train, rng=make_rng(mask_seed) if train else None)
    y = targets_off_kinks(out, rng)
    _, grad, out0, cache0 = _objective(params, X, y, train, mask_seed)
    analytic = architecture(params.kind).backward(params, cache0, grad)
    base = _pattern(cache0, out0, y)
    report = {}
    for name, tensor in params.tensors.items():
        g = analytic[name]
        errs, skipped = [], 0
        for idx in np.ndindex(tensor.shape):
            old = tensor[idx]
            tensor[idx] = old + FD_STEP
            lp, _, op, cp = _objective(params, X, y, train, mask_seed)
            tensor[idx] = old - FD_STEP
            lm, _, om, cm = _objective(params, X, y, train, mask_seed)
            tensor[idx] = old
            same = all(
                np.array_equal(a, b) and np.array_equal(a, c)
                for a, b, c in zip(base, _pattern(cp, op, y), _pattern(cm, om, y))
            )
            if not same:
                skipped += 1
                continue
            fd = (lp - lm) / (2 * FD_STEP)
            scale = max(abs(g[idx]), abs(fd))
            errs.append(0.0 if scale < 1e-9 else abs(g[idx] - fd) / scale)
        report[name] = (max(errs) if errs else 0.0, skipped)
    return report
