"""Finite-difference verification of reverse-mode gradients."""
from __future__ import annotations

import numpy as np

from .tensor import no_grad, record_kinks

# Denominator floor of the relative error: coordinates whose analytic and
# numeric gradients are both below this are compared in absolute terms.
ABS_FLOOR = 1e-6


def relative_error(analytic, numeric, floor=ABS_FLOOR):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def _eval(f, params):
    with record_kinks() as log:
        value = float(f(params).data)
    return value, b"".join(m.tobytes() for m in log)


class GradCheckReport(dict):
    """``{param name: max relative error}`` plus bookkeeping attributes."""

    max_error = 0.0
    checked = 0
    skipped_kinks = 0


def grad_check(f, params, h=1e-5, max_coords=None, rng=None, per_param=False):
    """Compare reverse-mode gradients of ``f(params)`` against central differences.

    Parameters
    ----------
    f : callable
        ``f(params) -> scalar Tensor``; must be deterministic.
    params : ParamStore
        Should hold float64 tensors for meaningful results.
    h : float
        Finite-difference step.
    max_coords : int, optional
        Parameters with more coordinates than this are checked on a random
        subset of this size drawn from ``rng``.
    per_param : bool
        Return a :class:`GradCheckReport` instead of the bare maximum.

    Coordinates whose ``+h`` and ``-h`` evaluations see a different leaky-ReLU
    sign pattern straddle a kink, where central differences are not a valid
    reference; they are skipped (and replaced by another draw when sampling).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    params.clear_grad()
    loss = f(params)
    if loss.requires_grad:
        loss.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in params.items()}
    params.clear_grad()

    report = GradCheckReport()
    with no_grad():
        _, base_pattern = _eval(f, params)
        for name, p in params.items():
            flat = p.data.reshape(-1)
            n = flat.size
            if max_coords is not None and n > max_coords:
                order = rng.permutation(n)
                want = max_coords
            else:
                order = np.arange(n)
                want = n
            a_flat = analytic[name].reshape(-1)
            worst = 0.0
            done = 0
            for c in order:
                if done >= want:
                    break
                orig = flat[c]
                flat[c] = orig + h
                fp, pat_p = _eval(f, params)
                flat[c] = orig - h
                fm, pat_m = _eval(f, params)
                flat[c] = orig
                if pat_p != base_pattern or pat_m != base_pattern:
                    report.skipped_kinks += 1
                    continue
                num = (fp - fm) / (2.0 * h)
                worst = max(worst, float(relative_error(a_flat[c], num)))
                done += 1
            report[name] = worst
            report.checked += done
            report.max_error = max(report.max_error, worst)
    if per_param:
        return report
    return report.max_error
