"""Sparsity-performance curve fitting and cross-run metric scaling.

The cliff model is a-hat(s) = A - B * s^N (optionally plus delta * m for a
0/1 mechanism indicator, fitted as an additive group offset). Fitting is
damped Gauss-Newton with an analytic Jacobian and a deterministic
initializer, so reruns are bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FitError

_LAMBDA0 = 1e-3
_STEP_TOL = 1e-10
_MAX_ITER = 500


@dataclass(frozen=True)
class PowerLawFit:
    A: float
    B: float
    N: float
    delta: float | None
    r2: float
    iterations: int
    converged: bool

    def predict(self, s, indicator=None) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        out = self.A - self.B * np.power(s, self.N)
        if self.delta is not None and indicator is not None:
            out = out + self.delta * np.asarray(indicator, dtype=np.float64)
        return out


def _model(theta, s, m):
    A, B, N = theta[0], theta[1], theta[2]
    pred = A - B * np.power(s, N)
    if m is not None:
        pred = pred + theta[3] * m
    return pred


def _jacobian(theta, s, m):
    """d residual / d theta for residual = a - model."""
    B, N = theta[1], theta[2]
    sN = np.power(s, N)
    # d(s^N)/dN = s^N log s, with the s=0 limit being 0 for N > 0
    logs = np.log(np.where(s > 0.0, s, 1.0))
    cols = [np.full_like(s, -1.0), sN, B * sN * logs]
    if m is not None:
        cols.append(-m)
    return np.stack(cols, axis=1)


def fit_power_law(s, a, indicator=None) -> PowerLawFit:
    """Fit a = A - B*s^N (+ delta*indicator) by damped Gauss-Newton.

    Deterministic init A0 = max(a), B0 = max(a)-min(a), N0 = 8; damping
    lambda starts at 1e-3, x10 on a rejected step, /10 on an accepted one;
    stops on relative step < 1e-10 or 500 iterations. N is projected to
    stay non-negative.
    """
    s = np.asarray(s, dtype=np.float64).ravel()
    a = np.asarray(a, dtype=np.float64).ravel()
    if s.size != a.size:
        raise ValueError("s and a must have equal length")
    if s.size < 3:
        raise FitError("need at least 3 points to fit 3 parameters")
    if np.all(s == s[0]):
        raise FitError("all abscissae identical; power law is unidentifiable")
    if np.any(s < 0.0):
        raise ValueError("s values must be non-negative")
    m = None
    if indicator is not None:
        m = np.asarray(indicator, dtype=np.float64).ravel()
        if m.size != s.size:
            raise ValueError("indicator length must match s")

    n_par = 3 if m is None else 4
    theta = np.zeros(n_par, dtype=np.float64)
    theta[0] = float(a.max())
    theta[1] = float(a.max() - a.min())
    theta[2] = 8.0

    r = a - _model(theta, s, m)
    ssr = float(r @ r)
    lam = _LAMBDA0
    converged = False
    it = 0
    for it in range(1, _MAX_ITER + 1):
        jac = _jacobian(theta, s, m)
        jtj = jac.T @ jac
        jtr = jac.T @ r
        diag = np.diag(jtj).copy()
        diag[diag <= 0.0] = 1.0
        accepted = False
        small_step = False
        for _ in range(50):
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = theta + step
            if trial[2] < 0.0:
                trial[2] = 0.0
            r_trial = a - _model(trial, s, m)
            ssr_trial = float(r_trial @ r_trial)
            if ssr_trial <= ssr:
                rel = float(np.linalg.norm(trial - theta)
                            / (np.linalg.norm(theta) + 1e-30))
                theta, r, ssr = trial, r_trial, ssr_trial
                lam = max(lam / 10.0, 1e-15)
                accepted = True
                small_step = rel < _STEP_TOL
                break
            lam *= 10.0
        if small_step or not accepted:
            # tiny relative step, or no downhill direction at any damping:
            # numerically stationary either way
            converged = True
            break

    r2 = r_squared(a, a - r)
    return PowerLawFit(A=float(theta[0]), B=float(theta[1]), N=float(theta[2]),
                       delta=(float(theta[3]) if m is not None else None),
                       r2=r2, iterations=it, converged=converged)


def r_squared(observed, predicted) -> float:
    """1 - SS_res/SS_tot; defined as 1.0 when both variances are zero."""
    obs = np.asarray(observed, dtype=np.float64).ravel()
    pred = np.asarray(predicted, dtype=np.float64).ravel()
    if obs.size != pred.size:
        raise ValueError("length mismatch")
    if obs.size == 0:
        raise ValueError("empty inputs")
    ss_res = float(np.sum((obs - pred) ** 2))
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0.0:
        if ss_res == 0.0:
            return 1.0
        raise FitError("zero total variance with nonzero residual")
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class ScaledMetric:
    group: object
    raw: float
    scaled: float


def scale_metrics(records, group_key="group") -> list:
    """Per-group max-scaling onto [0, 1]; losses are negated first.

    Records are dicts with keys `value`, `loss` (bool) and a group key.
    Accuracy-like groups divide by the group max (so {50, 100} -> {0.5, 1});
    negated-loss groups are mapped affinely onto [0, 1] (best loss -> 1.0),
    which keeps ordering and the [0, 1] range. Single-element groups -> 1.0.
    """
    groups: dict = {}
    order = []
    for rec in records:
        g = rec[group_key]
        if g not in groups:
            groups[g] = []
            order.append(g)
        v = float(rec["value"])
        groups[g].append((v, -v if rec.get("loss", False) else v))

    out = []
    for g in order:
        pairs = groups[g]
        vals = np.array([p[1] for p in pairs])
        vmax, vmin = float(vals.max()), float(vals.min())
        for raw, v in pairs:
            if vmax == vmin:
                scaled = 1.0
            elif vmin > 0.0:
                scaled = v / vmax
            else:
                scaled = (v - vmin) / (vmax - vmin)
            out.append(ScaledMetric(group=g, raw=raw, scaled=float(scaled)))
    return out
