"""Independent oracles shared by the unit and acceptance suites.

Everything here is deliberately naive (explicit loops, closed-form small
cases, exhaustive grids, finite differences) and never calls the code path
it is used to check.
"""

import numpy as np


def dft_triple_loop(taps, m_subcarriers):
    """Per-subcarrier channel by literal summation over (m, d, entry)."""
    n_taps, n_rx, n_tx = taps.shape
    out = np.zeros((m_subcarriers, n_rx, n_tx), dtype=complex)
    for m in range(1, m_subcarriers + 1):
        for d in range(n_taps):
            phase = np.exp(-2j * np.pi * m * d / m_subcarriers)
            for i in range(n_rx):
                out[m - 1, i, :] += taps[d, i, :] * phase
    return out


def gram_eigs_2x2(a):
    """Eigenvalues of the 2x2 Gram matrix a^H a by the quadratic formula."""
    g = a.conj().T @ a
    tr = g[0, 0].real + g[1, 1].real
    det = (g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]).real
    disc = np.sqrt(max(tr * tr - 4.0 * det, 0.0))
    return np.array([(tr + disc) / 2.0, (tr - disc) / 2.0])


def logdet2_charpoly_3x3(a):
    """log2 det of a 3x3 HPD matrix via characteristic-polynomial roots.

    Coefficients come from explicit cofactor arithmetic; the cubic is solved
    with numpy's companion-matrix root finder (no Cholesky anywhere).
    """

    def det2(m):
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]

    tr = np.trace(a)
    minors = (
        det2(a[np.ix_([1, 2], [1, 2])])
        + det2(a[np.ix_([0, 2], [0, 2])])
        + det2(a[np.ix_([0, 1], [0, 1])])
    )
    det3 = (
        a[0, 0] * det2(a[np.ix_([1, 2], [1, 2])])
        - a[0, 1] * det2(a[np.ix_([1, 2], [0, 2])])
        + a[0, 2] * det2(a[np.ix_([1, 2], [0, 1])])
    )
    roots = np.roots([1.0, -tr.real, minors.real, -det3.real])
    return float(np.sum(np.log2(roots.real)))


def inv2_cofactor(m):
    """2x2 inverse by cofactors."""
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det


def eigs_hermitian_2x2(m):
    """Closed-form eigenvalues of a 2x2 Hermitian matrix, ascending."""
    a, c = m[0, 0].real, m[1, 1].real
    disc = np.sqrt((a - c) ** 2 + 4.0 * np.abs(m[0, 1]) ** 2)
    return np.array([(a + c - disc) / 2.0, (a + c + disc) / 2.0])


def phase_grid(points=256):
    return 2.0 * np.pi * np.arange(points) / points


def grid_min_fit_analog(a, b, points=256):
    """Exhaustive 2-entry phase-grid minimum of ||a - x b||^2, a (2,1), b (1,1)."""
    ph = phase_grid(points)
    x0 = np.exp(1j * ph)
    t0 = np.abs(a[0, 0] - x0 * b[0, 0]) ** 2
    t1 = np.abs(a[1, 0] - x0 * b[0, 0]) ** 2
    return float(np.min(t0[:, None] + t1[None, :]))


def grid_min_precoder(f_opt, points=256):
    """Grid minimum over w = [e^{j p1}, e^{j p2}] of the bb-eliminated precoder fit.

    For fixed unit-modulus w the optimal scalar baseband is w^H f / ||w||^2,
    giving residual ||f||^2 - |w^H f|^2 / 2.
    """
    ph = phase_grid(points)
    e = np.exp(-1j * ph)
    inner = e[:, None] * f_opt[0, 0] + e[None, :] * f_opt[1, 0]
    return float(np.min(np.sum(np.abs(f_opt) ** 2) - np.abs(inner) ** 2 / 2.0))


def grid_min_combiner(w_mmse, lam, points=256):
    """Grid minimum of the weighted, bb-eliminated combiner fit (N_R=2, N_RF=N_S=1).

    J(w) = w_m^H L w_m - |w^H L w_m|^2 / (w^H L w)  with the closed-form
    baseband plugged in.
    """
    ph = phase_grid(points)
    e1 = np.exp(1j * ph)
    base = float(np.real(w_mmse.conj().T @ lam @ w_mmse))
    best = np.inf
    lw = lam @ w_mmse  # (2,1)
    for p1 in e1:
        w = np.stack([np.full(points, p1), e1])  # (2, points)
        num = np.abs(np.conj(w[0]) * lw[0, 0] + np.conj(w[1]) * lw[1, 0]) ** 2
        den = np.real(
            np.conj(w[0]) * (lam[0, 0] * w[0] + lam[0, 1] * w[1])
            + np.conj(w[1]) * (lam[1, 0] * w[0] + lam[1, 1] * w[1])
        )
        best = min(best, float(np.min(base - num / den)))
    return best


def central_diff(fun, x0, eps=1e-6):
    """Central finite difference of a scalar function of a real array."""
    grad = np.zeros_like(x0)
    flat = grad.reshape(-1)
    xf = x0.reshape(-1)
    for k in range(xf.size):
        orig = xf[k]
        xf[k] = orig + eps
        f_plus = fun(x0)
        xf[k] = orig - eps
        f_minus = fun(x0)
        xf[k] = orig
        flat[k] = (f_plus - f_minus) / (2.0 * eps)
    return grad
