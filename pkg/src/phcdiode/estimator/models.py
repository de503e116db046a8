"""Fit models as scikit-learn style regressors, plus functional wrappers.

Each estimator follows the usual protocol: hyper-parameters in ``__init__``,
``fit(X, y, sigma=None)`` stores ``result_`` (a :class:`FitResult`) and
``params_``; ``predict(X)`` evaluates the fitted curve.  ``X`` is the single
independent variable, 1-D or one column.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import nnls
from scipy.special import log_ndtr, ndtr
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_1d, check_curve
from .lm import FitResult, least_squares


class CurveFitEstimator(RegressorMixin, BaseEstimator):
    param_names: tuple = ()

    def _model(self, x, p):
        raise NotImplementedError

    def _initial_guess(self, x, y):
        raise NotImplementedError

    def _finalize(self, res, x, y, sigma):
        return res

    # finite-difference step scale per parameter; None uses max(|p|, 1)
    _step_scale = None

    def fit(self, X, y, sigma=None, init=None):
        x, y, sigma = check_curve(X, y, sigma, min_points=len(self.param_names) + 1)
        if init is None:
            init = self._initial_guess(x, y)
        res = least_squares(self._model, x, y, sigma, init, self.param_names, scale=self._step_scale)
        self.result_ = self._finalize(res, x, y, sigma)
        self.params_ = dict(self.result_.params)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        x = as_1d(X)
        return self._model(x, np.array([self.params_[k] for k in self.param_names]))


# --------------------------------------------------------------- antibunching

def antibunching_model(tau, A, tau_t):
    return 1.0 - A * np.exp(-np.abs(tau) / tau_t)


class AntibunchingDip(CurveFitEstimator):
    """``g2(tau) = 1 - A exp(-|tau|/tau_t)``; reports ``g2_zero = 1 - A``.

    Parameters
    ----------
    weighted : bool
        Use the supplied per-bin sigma as weights; otherwise fit unweighted.
    """

    param_names = ("A", "tau_t")

    def __init__(self, weighted=True):
        self.weighted = weighted

    def fit(self, X, y, sigma=None, init=None):
        return super().fit(X, y, sigma if self.weighted else None, init)

    def _model(self, x, p):
        A, tau_t = p
        if tau_t <= 0:
            return np.full_like(x, np.nan)
        return antibunching_model(x, A, tau_t)

    def _initial_guess(self, x, y):
        i0 = int(np.argmin(y))
        A = 1.0 - y[i0]
        target = 1.0 - A / math.e
        order = np.argsort(np.abs(x - x[i0]), kind="stable")
        tau_t = None
        for i in order:
            if abs(x[i] - x[i0]) > 0 and y[i] >= target:
                tau_t = abs(x[i] - x[i0])
                break
        if tau_t is None:
            tau_t = (x.max() - x.min()) / 4.0
        return [A, tau_t]

    def _finalize(self, res, x, y, sigma):
        A, tau_t = res.params["A"], res.params["tau_t"]
        res.derived["g2_zero"] = 1.0 - A
        res.derived["g2_zero_err"] = res.std_errors["A"]
        if x.max() < 3 * tau_t or -x.min() < 3 * tau_t:
            res.warnings.append("curve spans less than 3 tau_t on at least one side")
        return res


def fit_g2(curve, weighted: bool = True) -> FitResult:
    """Fit the antibunching dip of a :class:`~phcdiode.photostats.G2Curve`."""
    est = AntibunchingDip(weighted=weighted).fit(curve.tau, curve.g2, curve.sigma)
    return est.result_


# ------------------------------------------------------------------ lorentzian

def lorentzian_model(x, center, fwhm, amplitude, offset):
    u = 2.0 * (x - center) / fwhm
    return offset + amplitude / (1.0 + u * u)


def lorentzian_jacobian(x, p):
    """Analytic d(model)/d(center, fwhm, amplitude, offset)."""
    center, fwhm, amplitude, _ = p
    u = 2.0 * (x - center) / fwhm
    den = 1.0 + u * u
    d_u = -2.0 * amplitude * u / den**2
    return np.column_stack([
        d_u * (-2.0 / fwhm),
        d_u * (-u / fwhm),
        1.0 / den,
        np.ones_like(x),
    ])


class LorentzianPeak(CurveFitEstimator):
    """Single Lorentzian on a flat offset; derives ``Q = center / fwhm``."""

    param_names = ("center", "fwhm", "amplitude", "offset")

    def _model(self, x, p):
        return lorentzian_model(x, *p)

    @staticmethod
    def _step_scale(p):
        # the centre moves on the scale of the linewidth, not of its own value
        w = max(abs(p[1]), 1e-12)
        a = max(abs(p[2]), abs(p[3]), 1e-12)
        return np.array([w, w, max(abs(p[2]), 1e-12), a])

    def _initial_guess(self, x, y):
        i = int(np.argmax(y))
        offset = float(np.min(y))
        amp = float(y[i] - offset)
        half = offset + amp / 2.0
        left = i
        while left > 0 and y[left] > half:
            left -= 1
        right = i
        while right < y.size - 1 and y[right] > half:
            right += 1
        width = float(x[right] - x[left])
        if width <= 0:
            width = float(x[1] - x[0]) * 2.0 if x.size > 1 else 1.0
        return [float(x[i]), width, amp, offset]

    def _finalize(self, res, x, y, sigma):
        res.params["fwhm"] = abs(res.params["fwhm"])
        c, w = res.params["center"], res.params["fwhm"]
        Q = c / w
        res.derived["Q"] = Q
        if res.covariance is not None:
            cov = res.covariance
            rel2 = cov[0, 0] / c**2 + cov[1, 1] / w**2 - 2.0 * cov[0, 1] / (c * w)
            res.derived["Q_err"] = float(Q * math.sqrt(max(rel2, 0.0)))
        else:
            res.derived["Q_err"] = float("nan")
        step = float(np.median(np.diff(x)))
        if w / step < 5:
            res.warnings.append("fewer than 5 grid points across the FWHM")
        if c - w / 2 < x.min() or c + w / 2 > x.max() or int(np.argmax(y)) in (0, y.size - 1):
            res.warnings.append("peak at grid edge")
        amp_err = res.std_errors["amplitude"]
        if not res.converged or not (abs(res.params["amplitude"]) > 3 * amp_err):
            res.warnings.append("no significant peak: amplitude compatible with zero")
        return res


def fit_lorentzian(spec, window=None, sigma=None) -> FitResult:
    """Fit one Lorentzian to a :class:`~phcdiode.spectra.Spectrum`.

    ``window=(lo, hi)`` restricts the fit range in nm.
    """
    x, y = spec.wavelengths, spec.intensities
    if window is not None:
        m = (x >= window[0]) & (x <= window[1])
        x, y = x[m], y[m]
        if sigma is not None:
            sigma = np.asarray(sigma)[m]
    return LorentzianPeak().fit(x, y, sigma).result_


# ------------------------------------------------- bi-exponential with the IRF

def exp_gauss_survival(t, tau, sigma):
    """P(T > t) for T = Exp(tau) + Normal(0, sigma)."""
    t = np.asarray(t, dtype=float)
    if sigma == 0:
        return np.where(t > 0, np.exp(-np.maximum(t, 0.0) / tau), 1.0)
    return ndtr(-t / sigma) + np.exp(sigma**2 / (2 * tau**2) - t / tau + log_ndtr(t / sigma - sigma / tau))


def _irf_sigma(irf_fwhm):
    return irf_fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class BiexpIRF(CurveFitEstimator):
    """Bin-integrated ``(a_fast e^-t/tau_fast + a_slow e^-t/tau_slow)`` convolved
    with a Gaussian IRF of FWHM ``irf_fwhm`` (same time unit as X).

    ``X`` are uniform bin centres, ``y`` counts per bin.  Amplitudes are the
    total counts in each component; time zero is the excitation instant.
    """

    param_names = ("tau_fast", "tau_slow", "a_fast", "a_slow")

    def __init__(self, irf_fwhm=90.0):
        self.irf_fwhm = irf_fwhm

    def _edges(self, x):
        bw = (x[-1] - x[0]) / (x.size - 1)
        return np.append(x - bw / 2, x[-1] + bw / 2)

    def _component(self, edges, tau):
        S = exp_gauss_survival(edges, tau, _irf_sigma(self.irf_fwhm))
        return S[:-1] - S[1:]

    def _model(self, x, p):
        tf, ts, af, as_ = p
        if tf <= 0 or ts <= 0:
            return np.full_like(x, np.nan)
        e = self._edges(x)
        return af * self._component(e, tf) + as_ * self._component(e, ts)

    def _initial_guess(self, x, y):
        e = self._edges(x)
        bw = e[1] - e[0]
        span = e[-1] - max(e[0], 0.0)
        w = 1.0 / np.sqrt(np.maximum(y, 1.0))
        best = None
        for tf in np.geomspace(bw, span / 2, 24):
            cf = self._component(e, tf)
            for ts in np.geomspace(tf * 1.5, span * 4, 24):
                B = np.column_stack([cf, self._component(e, ts)]) * w[:, None]
                amps, rnorm = nnls(B, y * w)
                if best is None or rnorm < best[0]:
                    best = (rnorm, tf, ts, amps)
        _, tf, ts, (af, as_) = best
        return [tf, ts, max(af, 1.0), max(as_, 1.0)]

    def fit(self, X, y, sigma=None, init=None):
        if sigma is None:
            sigma = np.sqrt(np.maximum(np.asarray(y, dtype=float), 1.0))
        return super().fit(X, y, sigma, init)

    def _finalize(self, res, x, y, sigma):
        p, se = res.params, res.std_errors
        if p["tau_fast"] > p["tau_slow"]:
            p["tau_fast"], p["tau_slow"] = p["tau_slow"], p["tau_fast"]
            p["a_fast"], p["a_slow"] = p["a_slow"], p["a_fast"]
            se["tau_fast"], se["tau_slow"] = se["tau_slow"], se["tau_fast"]
            se["a_fast"], se["a_slow"] = se["a_slow"], se["a_fast"]
            if res.covariance is not None:
                perm = [1, 0, 3, 2]
                res.covariance = res.covariance[np.ix_(perm, perm)]
        if abs(p["tau_slow"] - p["tau_fast"]) < 0.1 * p["tau_fast"]:
            res.warnings.append("degenerate: tau_fast and tau_slow within 10%")
        if res.converged and all(_significant(p[k], se[k]) for k in ("a_fast", "a_slow")) \
                and all(math.isfinite(se[k]) for k in self.param_names):
            return res
        # the data do not support two components: report a single exponential
        mono = self._fit_single(x, y, sigma, res)
        mono.warnings = res.warnings + [
            "slow component unidentifiable: data consistent with a single exponential "
            "(tau_slow reported as NaN)"
        ]
        return mono

    def _fit_single(self, x, y, sigma, res):
        e = self._edges(x)

        def model(x_, q):
            if q[0] <= 0:
                return np.full_like(x_, np.nan)
            return q[1] * self._component(e, q[0])

        candidates = [v for v in (res.params["tau_fast"], res.params["tau_slow"]) if v > 0]
        tau0 = float(np.sum(np.clip(x, 0, None) * y) / max(np.sum(y), 1.0)) or 1.0
        best = None
        for t0 in candidates + [tau0]:
            try:
                r = least_squares(model, x, y, sigma, [t0, float(np.sum(y))], ("tau", "a"))
            except FloatingPointError:
                continue
            if best is None or r.chi2 < best.chi2:
                best = r
        nan = float("nan")
        return FitResult(
            params={"tau_fast": best.params["tau"], "tau_slow": nan, "a_fast": best.params["a"], "a_slow": 0.0},
            std_errors={"tau_fast": best.std_errors["tau"], "tau_slow": nan,
                        "a_fast": best.std_errors["a"], "a_slow": nan},
            residual_norm=best.residual_norm, iterations=res.iterations + best.iterations,
            converged=best.converged, chi2=best.chi2, dof=best.dof,
            message=f"single-exponential fallback: {best.message}",
        )


def _significant(value, err):
    return value > 0 and math.isfinite(err) and value > 2 * err


def fit_biexp_irf(trace, irf_fwhm: float = 90.0, t_min=None, t_max=None) -> FitResult:
    """Fit a decay :class:`~phcdiode.photostats.Histogram` (times in ps).

    ``t_min``/``t_max`` restrict the bins used.
    """
    if irf_fwhm < 0:
        raise ValueError("irf_fwhm must be >= 0")
    x = trace.centers
    y = np.asarray(trace.counts, dtype=float)
    m = np.ones(x.size, dtype=bool)
    if t_min is not None:
        m &= x >= t_min
    if t_max is not None:
        m &= x <= t_max
    return BiexpIRF(irf_fwhm=irf_fwhm).fit(x[m], y[m]).result_


# ----------------------------------------------------------------- Stark line

class StarkLine(RegressorMixin, BaseEstimator):
    """Weighted linear regression ``lambda_X = intercept + slope * V``."""

    param_names = ("intercept", "slope")

    def fit(self, X, y, sigma=None):
        x, y, sigma = check_curve(X, y, sigma, min_points=2)
        w = np.ones_like(y) if sigma is None else 1.0 / sigma
        B = np.column_stack([np.ones_like(x), x]) * w[:, None]
        coef, *_ = np.linalg.lstsq(B, y * w, rcond=None)
        r = (y - (coef[0] + coef[1] * x)) * w
        chi2 = float(r @ r)
        dof = x.size - 2
        A = B.T @ B
        try:
            cov = np.linalg.inv(A)
            if dof > 0:
                cov = cov * (chi2 / dof)
                errors = np.sqrt(np.diag(cov))
            else:
                errors = np.full(2, np.nan)
            converged, msg = True, "closed-form solution"
        except np.linalg.LinAlgError:
            cov, errors = None, np.full(2, np.nan)
            converged, msg = False, "singular normal matrix: all V identical"
        self.result_ = FitResult(
            params=dict(zip(self.param_names, coef.tolist())),
            std_errors=dict(zip(self.param_names, errors.tolist())),
            residual_norm=math.sqrt(chi2), iterations=1, converged=converged,
            covariance=cov, chi2=chi2, dof=dof, message=msg,
        )
        self.params_ = dict(self.result_.params)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        return self.params_["intercept"] + self.params_["slope"] * as_1d(X)


def fit_stark(rows, sigma=None) -> FitResult:
    """Stark slope and the resonance crossing from a V_QD sweep.

    ``rows`` is a :class:`~phcdiode.spectra.SweepTable` or a sequence of
    ``(V, lambda_S, lambda_AS, lambda_X, detuning)``.  Returns params
    ``slope`` (nm/V) and ``lambda_at_Vres`` (nm) and ``derived['V_res_V']``,
    the bias where the detuning regression crosses zero.
    """
    if hasattr(rows, "rows"):
        V, lam, det = rows.column("V"), rows.column("lambda_X"), rows.column("detuning")
    else:
        arr = np.asarray(rows, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ValueError("need at least two sweep rows")
        V, lam, det = arr[:, 0], arr[:, 3], arr[:, 4]
    if V.size < 2:
        raise ValueError("need at least two sweep rows")
    line = StarkLine().fit(V, lam, sigma).result_
    det_line = StarkLine().fit(V, det, sigma).result_
    d0, d1 = det_line.params["intercept"], det_line.params["slope"]
    V_res = -d0 / d1 if d1 != 0 else float("nan")
    slope, icpt = line.params["slope"], line.params["intercept"]
    lam_res = icpt + slope * V_res
    out = FitResult(
        params={"slope": slope, "lambda_at_Vres": lam_res},
        std_errors={"slope": line.std_errors["slope"],
                    "lambda_at_Vres": _line_error(line, V_res)},
        residual_norm=line.residual_norm, iterations=1, converged=line.converged,
        chi2=line.chi2, dof=line.dof, message=line.message,
    )
    out.derived["V_res_V"] = V_res
    if d1 == 0:
        out.warnings.append("detuning does not depend on V: no crossing")
    return out


def _line_error(res, V):
    cov = res.covariance
    if cov is None or not math.isfinite(V) or res.dof <= 0:
        return float("nan")
    var = cov[0, 0] + 2 * V * cov[0, 1] + V * V * cov[1, 1]
    return math.sqrt(max(var, 0.0))
