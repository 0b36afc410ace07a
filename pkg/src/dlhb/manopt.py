"""Manifold optimization on elementwise unit-modulus matrices.

Analog beamformers live on the complex-circle manifold {X : |X_ij| = 1}.
The precoder solver alternates an exact least-squares baseband update with
Riemannian steepest descent (Armijo backtracking) on the analog factor for

    min ||F_opt_all - X B||_F^2 ;

the combiner solver does the same against the array-output-covariance
weighted distance, whose exact baseband minimizer is the closed form

    W_BB[m] = (W_RF^H Lambda_y[m] W_RF)^-1 (W_RF^H Lambda_y[m] W_MMSE[m]).

Both alternations are monotone by construction; objective traces record
every accepted step.
"""

from dataclasses import dataclass, field

import numpy as np

from . import beamforming
from .beamforming import HybridBeamformer, LinkParams, normalize_power
from .channel import FrequencyChannel
from .numerics import RankDeficientError, lstsq

_ARMIJO = 1e-4
_MAX_HALVINGS = 30


@dataclass(frozen=True)
class MoSettings:
    outer_iters: int = 10    # max alternations
    inner_iters: int = 50    # max Riemannian steps per analog update
    grad_tol: float = 1e-6   # tangent-gradient norm threshold
    obj_tol: float = 1e-6    # relative objective-change stop
    step_init: float = 1.0   # initial backtracking step
    seed: int = 0            # seed of the random initial analog point

    def __post_init__(self):
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise ValueError("iteration counts must be >= 1")
        if min(self.grad_tol, self.obj_tol, self.step_init) <= 0:
            raise ValueError("tolerances and step_init must be positive")


@dataclass
class MoReport:
    objective_trace: list[float] = field(default_factory=list)
    converged: bool = False
    iters_used: int = 0


class _RestartInit(Exception):
    """Line search failed on the very first step from the random init."""


def tangent_project(egrad: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Project a Euclidean gradient onto the tangent space at x.

    Removes the radial component entrywise:  t = g - Re{g conj(x)} x,
    so Re{t_ij conj(x_ij)} = 0 for every entry.
    """
    return egrad - np.real(egrad * np.conj(x)) * x


def retract(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Map the tangent step v back onto the manifold by entrywise renormalization."""
    y = x + v
    mag = np.abs(y)
    if np.any(mag < 1e-14):
        raise ValueError("degenerate retraction: an entry of x + v is (near) zero")
    return y / mag


def _random_unit_modulus(shape, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.exp(2j * np.pi * rng.random(shape))


def _descend(x, objective, egrad, settings: MoSettings, trace: list):
    """Armijo-backtracked Riemannian steepest descent from x.

    Appends each accepted objective value to `trace` (whose last entry must
    be objective(x)).  Returns (x, converged, line_failed, steps).
    """
    f = trace[-1]
    steps = 0
    for _ in range(settings.inner_iters):
        g = tangent_project(egrad(x), x)
        gnorm2 = float(np.sum(g.real**2 + g.imag**2))
        if np.sqrt(gnorm2) < settings.grad_tol:
            return x, True, False, steps
        t = settings.step_init
        accepted = False
        for _ in range(_MAX_HALVINGS + 1):
            cand = retract(x, -t * g)
            f_cand = objective(cand)
            if f_cand <= f - _ARMIJO * t * gnorm2:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return x, False, True, steps
        f_prev, f, x = f, f_cand, cand
        trace.append(f)
        steps += 1
        if abs(f_prev - f) <= settings.obj_tol * max(1.0, abs(f_prev)):
            return x, True, False, steps
    return x, False, False, steps


def fit_analog(a: np.ndarray, b: np.ndarray, x0: np.ndarray, settings: MoSettings):
    """Minimize ||a - x b||_F^2 over unit-modulus x from the start point x0.

    Returns (x, MoReport).  A line-search failure (30 halvings without an
    Armijo decrease) returns the current iterate with converged = False.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    x0 = np.asarray(x0, dtype=np.complex128)
    if np.max(np.abs(np.abs(x0) - 1.0)) > 1e-9:
        raise ValueError("x0 must have unit-modulus entries")

    def objective(x):
        r = a - x @ b
        return float(np.sum(r.real**2 + r.imag**2))

    def egrad(x):
        return -2.0 * (a - x @ b) @ b.conj().T

    trace = [objective(x0)]
    x, converged, line_failed, steps = _descend(x0, objective, egrad, settings, trace)
    return x, MoReport(objective_trace=trace, converged=converged, iters_used=steps)


def _weighted_closures(w_blocks, lam, bb):
    """Objective/gradient of sum_m ||Lambda^1/2[m] (W[m] - X B[m])||_F^2."""

    def objective(x):
        resid = w_blocks - x @ bb
        return float(np.real(np.einsum("mis,mis->", np.conj(resid), lam @ resid)))

    def egrad(x):
        resid = w_blocks - x @ bb
        return -2.0 * np.einsum("mis,mjs->ij", lam @ resid, np.conj(bb))

    return objective, egrad


def solve_precoder(f_opt_all: np.ndarray, n_rf: int, settings: MoSettings, n_streams: int):
    """Alternating hybrid-precoder fit to the stacked unconstrained precoders.

    f_opt_all is the N_T x (M N_S) horizontal stack [F_opt[1], ..., F_opt[M]].
    Alternates an exact per-subcarrier least-squares baseband update with a
    Riemannian descent analog update, then applies the single global power
    normalization.  Returns (f_rf, f_bb, MoReport) with f_bb of shape
    (M, N_RF, N_S).
    """
    f_opt_all = np.asarray(f_opt_all, dtype=np.complex128)
    n_tx, cols = f_opt_all.shape
    if cols % n_streams:
        raise ValueError("column count of f_opt_all must be a multiple of n_streams")
    m_count = cols // n_streams

    def attempt(seed):
        x = _random_unit_modulus((n_tx, n_rf), seed)
        bb = lstsq(x, f_opt_all)
        trace = [float(np.sum(np.abs(f_opt_all - x @ bb) ** 2))]
        converged = False
        alternations = 0
        for outer in range(settings.outer_iters):
            def objective(xc, bb=bb):
                r = f_opt_all - xc @ bb
                return float(np.sum(r.real**2 + r.imag**2))

            def egrad(xc, bb=bb):
                return -2.0 * (f_opt_all - xc @ bb) @ bb.conj().T

            f_before = trace[-1]
            x, _, line_failed, steps = _descend(x, objective, egrad, settings, trace)
            if line_failed and steps == 0 and outer == 0:
                raise _RestartInit
            bb = lstsq(x, f_opt_all)
            r = f_opt_all - x @ bb
            trace.append(float(np.sum(r.real**2 + r.imag**2)))
            alternations += 1
            if abs(f_before - trace[-1]) <= settings.obj_tol * max(1.0, abs(f_before)):
                converged = True
                break
        return x, bb, MoReport(objective_trace=trace, converged=converged, iters_used=alternations)

    try:
        x, bb, report = attempt(settings.seed)
    except _RestartInit:
        try:
            x, bb, report = attempt(settings.seed + 1)
        except _RestartInit:
            raise RuntimeError(
                "analog precoder line search failed at iteration 0 for two seeds"
            ) from None
    f_bb = bb.reshape(n_rf, m_count, n_streams).transpose(1, 0, 2)
    f_bb = normalize_power(x, f_bb)
    return x, f_bb, report


def solve_combiner(w_mmse_all: np.ndarray, lambdas, n_rf: int, settings: MoSettings, n_streams: int):
    """Alternating hybrid-combiner fit to the stacked MMSE combiners.

    w_mmse_all is the N_R x (M N_S) stack [W_MMSE[1], ..., W_MMSE[M]] and
    lambdas the M array-output covariances Lambda_y[m] (HPD).  Both
    alternation steps minimize the Lambda_y-weighted distance, whose exact
    baseband minimizer is the closed-form constraint

        W_BB[m] = (W_RF^H Lambda_y[m] W_RF)^-1 (W_RF^H Lambda_y[m] W_MMSE[m]),

    so the recorded trace is non-increasing and the returned pair satisfies
    the constraint.  Returns (w_rf, w_bb, MoReport) with w_bb of shape
    (M, N_RF, N_S).
    """
    w_mmse_all = np.asarray(w_mmse_all, dtype=np.complex128)
    n_rx, cols = w_mmse_all.shape
    if cols % n_streams:
        raise ValueError("column count of w_mmse_all must be a multiple of n_streams")
    m_count = cols // n_streams
    lam = np.asarray(lambdas, dtype=np.complex128)
    if lam.shape != (m_count, n_rx, n_rx):
        raise ValueError(f"expected {m_count} covariances of shape {(n_rx, n_rx)}")
    w_blocks = w_mmse_all.reshape(n_rx, m_count, n_streams).transpose(1, 0, 2)

    def bb_step(x):
        xh_lam = np.conj(x.T)[None, :, :] @ lam          # (M, N_RF, N_R)
        gram = xh_lam @ x                                # (M, N_RF, N_RF)
        rhs = xh_lam @ w_blocks                          # (M, N_RF, N_S)
        try:
            return np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError as exc:
            raise RankDeficientError(
                "W_RF^H Lambda_y W_RF is singular; re-run with a different seed"
            ) from exc

    def attempt(seed):
        x = _random_unit_modulus((n_rx, n_rf), seed)
        bb = bb_step(x)
        objective, egrad = _weighted_closures(w_blocks, lam, bb)
        trace = [objective(x)]
        converged = False
        alternations = 0
        for outer in range(settings.outer_iters):
            f_before = trace[-1]
            x, _, line_failed, steps = _descend(x, objective, egrad, settings, trace)
            if line_failed and steps == 0 and outer == 0:
                raise _RestartInit
            bb = bb_step(x)
            objective, egrad = _weighted_closures(w_blocks, lam, bb)
            trace.append(objective(x))
            alternations += 1
            if abs(f_before - trace[-1]) <= settings.obj_tol * max(1.0, abs(f_before)):
                converged = True
                break
        return x, bb, MoReport(objective_trace=trace, converged=converged, iters_used=alternations)

    try:
        x, bb, report = attempt(settings.seed)
    except _RestartInit:
        try:
            x, bb, report = attempt(settings.seed + 1)
        except _RestartInit:
            raise RuntimeError(
                "analog combiner line search failed at iteration 0 for two seeds"
            ) from None
    return x, bb, report


def solve_hybrid(fc: FrequencyChannel, link: LinkParams, n_rf: int, settings: MoSettings):
    """Full MO pipeline: SVD precoders, Eq.-style precoder fit, MMSE combiner fit.

    Returns (HybridBeamformer, (precoder MoReport, combiner MoReport)).
    """
    n_s = link.n_streams
    f_opts = [
        beamforming.optimal_precoder(fc.per_subcarrier[m], n_s, subcarrier=m + 1)
        for m in range(fc.n_subcarriers)
    ]
    f_rf, f_bb, rep_p = solve_precoder(np.hstack(f_opts), n_rf, settings, n_s)
    w_mmse = [
        beamforming.mmse_combiner(fc.per_subcarrier[m], f_opts[m], link)
        for m in range(fc.n_subcarriers)
    ]
    lambdas = np.stack(
        [
            beamforming.output_covariance(fc.per_subcarrier[m], f_rf, f_bb[m], link)
            for m in range(fc.n_subcarriers)
        ]
    )
    w_rf, w_bb, rep_c = solve_combiner(np.hstack(w_mmse), lambdas, n_rf, settings, n_s)
    bf = HybridBeamformer(f_rf=f_rf, w_rf=w_rf, f_bb=f_bb, w_bb=w_bb)
    return bf, (rep_p, rep_c)
