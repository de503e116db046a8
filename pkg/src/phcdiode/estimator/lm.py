"""Levenberg-Marquardt weighted least squares with a finite-difference Jacobian."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .. import _io


class ModelEvaluationError(FloatingPointError):
    pass


@dataclass(eq=False)
class FitResult:
    params: dict
    std_errors: dict
    residual_norm: float
    iterations: int
    converged: bool
    covariance: np.ndarray | None = None
    chi2: float = float("nan")
    dof: int = 0
    message: str = ""
    warnings: list = field(default_factory=list)
    derived: dict = field(default_factory=dict)

    def __getitem__(self, name):
        if name in self.params:
            return self.params[name]
        return self.derived[name]

    def error(self, name) -> float:
        if name in self.std_errors:
            return self.std_errors[name]
        return self.derived[f"{name}_err"]

    def to_dict(self) -> dict:
        return {
            "params": dict(self.params),
            "std_errors": dict(self.std_errors),
            "derived": dict(self.derived),
            "residual_norm": self.residual_norm,
            "chi2": self.chi2,
            "dof": self.dof,
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return _io.json_text(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        d = json.loads(text)
        return cls(params=_nan_for_null(d["params"]), std_errors=_nan_for_null(d["std_errors"]),
                   residual_norm=_float(d["residual_norm"]), iterations=d["iterations"],
                   converged=d["converged"], chi2=_float(d.get("chi2")), dof=d.get("dof", 0),
                   message=d.get("message", ""), warnings=d.get("warnings", []),
                   derived=_nan_for_null(d.get("derived", {})))


def _float(v):
    return float("nan") if v is None else float(v)


def _nan_for_null(d):
    return {k: _float(v) for k, v in d.items()}


# central differences balance truncation (h^2) and rounding (eps/h) at h ~ eps^(1/3)
_CBRT_EPS = float(np.finfo(float).eps) ** (1.0 / 3.0)


def fd_jacobian(model, x, p, rel_step=_CBRT_EPS, scale=None):
    """Central-difference Jacobian of ``model(x, p)`` with respect to ``p``.

    The step for parameter j is ``rel_step * scale[j]``; ``scale`` defaults
    to ``max(|p_j|, 1)``.  Models whose natural parameter scale differs from
    the parameter value (a peak centre far from zero, say) should pass one.
    """
    p = np.asarray(p, dtype=float)
    if scale is None:
        scale = np.maximum(np.abs(p), 1.0)
    elif callable(scale):
        scale = scale(p)
    J = np.empty((np.size(x), p.size))
    for j in range(p.size):
        h = rel_step * scale[j]
        up, dn = p.copy(), p.copy()
        up[j] += h
        dn[j] -= h
        J[:, j] = (model(x, up) - model(x, dn)) / (up[j] - dn[j])
    return J


def least_squares(model, x, y, sigma=None, init=None, names=None, *, lam0=1e-3,
                  max_iter=500, xtol=1e-8, ftol=1e-10, scale=None, polish=20) -> FitResult:
    """Minimise sum(((y - model(x, p)) / sigma)**2) over ``p``.

    ``model(x, p)`` takes a parameter vector.  Damping starts at ``lam0`` and
    is multiplied by 10 on a rejected step, divided by 10 on an accepted one;
    the damping term is scaled by diag(J^T W J).  Stops when the largest
    relative parameter step drops below ``xtol`` or the relative chi^2 change
    of an accepted step below ``ftol``.

    After convergence up to ``polish`` undamped Gauss-Newton steps are taken
    while their length keeps shrinking, so the optimum is pinned to machine
    precision instead of to wherever the path crossed the tolerance.  ``scale`` sets finite-difference steps (see
    :func:`fd_jacobian`).

    Standard errors are sqrt(diag((J^T W J)^-1) * chi2 / dof).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.array(init, dtype=float)
    n, m = y.size, p.size
    if names is None:
        names = [f"p{i}" for i in range(m)]
    if n < m + 1:
        raise ValueError(f"need at least {m + 1} data points for {m} parameters, got {n}")
    if sigma is None:
        w = np.ones(n)
    else:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != y.shape or not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
            raise ValueError("sigma must match y and be finite and > 0")
        w = 1.0 / sigma

    def resid(params):
        f = model(x, params)
        if not np.all(np.isfinite(f)):
            raise ModelEvaluationError(f"model returned non-finite values at {dict(zip(names, params))}")
        return (y - f) * w

    r = resid(p)
    chi2 = float(r @ r)
    lam = lam0
    converged = False
    message = "maximum iterations reached"
    it = 0
    for it in range(1, max_iter + 1):
        if chi2 == 0.0:
            converged, message = True, "exact fit"
            break
        J = fd_jacobian(model, x, p, scale=scale) * w[:, None]
        A = J.T @ J
        g = J.T @ r
        d = np.diag(A).copy()
        if np.any(d == 0):
            message = "singular normal matrix: a parameter does not affect the model"
            break
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_new = p + step
            try:
                r_new = resid(p_new)
            except ModelEvaluationError:
                lam *= 10.0
                continue
            chi2_new = float(r_new @ r_new)
            if chi2_new < chi2:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            converged, message = True, "no further decrease possible (machine precision)"
            break
        rel_step = np.max(np.abs(step) / np.maximum(np.abs(p_new), 1e-300))
        rel_chi2 = (chi2 - chi2_new) / chi2
        p, r, chi2 = p_new, r_new, chi2_new
        lam = max(lam / 10.0, 1e-12)
        if rel_step < xtol:
            converged, message = True, "relative step below tolerance"
            break
        if rel_chi2 < ftol:
            converged, message = True, "relative chi2 change below tolerance"
            break

    if converged and chi2 > 0.0 and polish > 0:
        p, r, chi2, extra = _polish(model, x, p, r, chi2, w, resid, scale, polish)
        it += extra

    dof = n - m
    J = fd_jacobian(model, x, p, scale=scale) * w[:, None]
    A = J.T @ J
    cov = None
    errors = {k: float("nan") for k in names}
    try:
        if np.linalg.cond(A) > 1e15:
            raise np.linalg.LinAlgError("ill-conditioned")
        cov = np.linalg.inv(A) * (chi2 / dof)
        errors = dict(zip(names, np.sqrt(np.abs(np.diag(cov))).tolist()))
    except np.linalg.LinAlgError:
        converged = False
        message = "singular normal matrix at solution; standard errors unavailable"
    return FitResult(
        params=dict(zip(names, p.tolist())),
        std_errors=errors,
        residual_norm=float(np.sqrt(chi2)),
        iterations=it,
        converged=converged,
        covariance=cov,
        chi2=chi2,
        dof=dof,
        message=message,
    )


def _polish(model, x, p, r, chi2, w, resid, scale, n_steps):
    """Gauss-Newton refinement near a converged minimum.

    chi^2 is flat to rounding there, so a step is kept while it is shorter
    than the previous one (the contraction of a convergent Newton iteration)
    and does not raise chi^2 beyond rounding.
    """
    prev = np.inf
    done = 0
    for done in range(1, n_steps + 1):
        J = fd_jacobian(model, x, p, scale=scale) * w[:, None]
        step, *_ = np.linalg.lstsq(J, r, rcond=None)
        size = float(np.max(np.abs(step) / np.maximum(np.abs(p), 1e-300)))
        if not size < prev:
            break
        p_new = p + step
        try:
            r_new = resid(p_new)
        except ModelEvaluationError:
            break
        chi2_new = float(r_new @ r_new)
        if chi2_new > chi2 * (1.0 + 1e-12):
            break
        p, r, chi2, prev = p_new, r_new, chi2_new, size
        if size < 1e-15:
            break
    return p, r, chi2, done
