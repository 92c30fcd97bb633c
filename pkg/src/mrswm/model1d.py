"""Arbitrary-order 1-D magnetic rotating shallow water moment system.

The conservative state per cell is the length-(5 + 4M) vector

    U = (h, hu_m, hv_m, ha_m, hb_m,
         h a1, h b1, h g1, h e1, ..., h aM, h bM, h gM, h eM)

where (u_m, v_m, a_m, b_m) are depth means of velocity and magnetic field
and (alpha_i, beta_i) / (gamma_i, eta_i) the vertical-profile coefficients
of velocity / magnetic field.  This module assembles the conservative
flux G(U), the Coriolis/bathymetry source S(U), the nonconservative
matrix Q(U) that multiplies U_y, the finite-difference flux Jacobian
J = dG/dU - Q, and one-sided local wave-speed bounds with monitoring of
complex eigenvalue contamination.

Every nonzero entry of Q(U) is a constant-coefficient linear combination
of conserved components divided by h.  That structure is captured once in
a third-order coefficient tensor (``coupling_tensor``) so that both the
pointwise matrix and the exact path integrals of the scheme contract
against the same data.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

try:
    from numba import njit
except ImportError:                                     # pragma: no cover
    njit = None

from .closure import ClosureTensors, build_tensors
from .errors import DryStateError, HyperbolicityError

H, HU, HV, HA, HB = range(5)
ALPHA, BETA, GAMMA, ETA = range(4)

DEFAULT_H_MIN = 1e-10
DEFAULT_DERIV_EPS = 1e-20
DEFAULT_TOL_IM = 0.1


def n_vars(order: int) -> int:
    return 5 + 4 * order


def moment_index(i: int, comp: int) -> int:
    """Flat index of moment block i (1-based) and component in {ALPHA..ETA}."""
    return 5 + 4 * (i - 1) + comp


def _zero_fn(y):
    return np.zeros_like(np.asarray(y, dtype=float))


@dataclass
class ModelParams:
    """Physical and numerical parameters of the 1-D moment system."""

    g: float
    order: int
    tensors: ClosureTensors | None = None
    coriolis: Callable = _zero_fn            # f(y)
    bathymetry: Callable = _zero_fn          # Z(y)
    bathymetry_slope: Callable = _zero_fn    # Z_y(y)
    h_min: float = DEFAULT_H_MIN
    tol_im: float = DEFAULT_TOL_IM
    deriv_eps: float = DEFAULT_DERIV_EPS
    q_tensor: np.ndarray = field(init=False, repr=False)
    q_matrix: np.ndarray = field(init=False, repr=False)
    path_matrix: np.ndarray = field(init=False, repr=False)
    a_matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.g <= 0.0:
            raise ValueError(f"gravity must be positive, got {self.g}")
        if self.tensors is None:
            self.tensors = build_tensors(self.order)
        if self.tensors.order != self.order:
            raise ValueError("tensor order does not match model order")
        self.q_tensor = coupling_tensor(self.tensors)
        # flattened layouts so the hot contractions run as single matmuls
        n = self.n_vars
        self.q_matrix = self.q_tensor.reshape(n * n, n).T.copy()
        self.path_matrix = self.q_tensor.reshape(n, n * n).T.copy()
        M = self.order
        self.a_matrix = self.tensors.A.reshape(M, M * M).T.copy()

    @property
    def n_vars(self) -> int:
        return n_vars(self.order)


def check_valid(U: np.ndarray, h_min: float = DEFAULT_H_MIN) -> None:
    """Reject states with non-finite entries or depth at/below the floor."""
    U = np.asarray(U)
    if not np.all(np.isfinite(U)):
        raise DryStateError("non-finite state encountered")
    h = U[..., H]
    if np.any(h <= h_min):
        j = int(np.argmin(h))
        raise DryStateError(
            f"depth {h.reshape(-1)[np.argmin(h)]:.3e} at flat index {j} "
            f"is at or below the floor {h_min:.1e}")


def _moments(U: np.ndarray, order: int) -> np.ndarray:
    """Primitive moment coefficients, shape (..., M, 4)."""
    h = U[..., H]
    return U[..., 5:].reshape(U.shape[:-1] + (order, 4)) / h[..., None, None]


def flux_g(U: np.ndarray, params: ModelParams) -> np.ndarray:
    """Conservative flux G(U); accepts batched states (..., 5+4M).

    Complex input is supported so the Jacobian can be formed by
    complex-step differentiation.  A compiled kernel handles large
    batches; the vectorized numpy path is the reference implementation
    and the fallback when numba is unavailable.
    """
    U = np.asarray(U)
    if not np.iscomplexobj(U):
        U = U.astype(float, copy=False)
    h = U[..., H]
    if np.any(h.real <= params.h_min):
        check_valid(U.real, params.h_min)
    if njit is not None and U.size >= 4 * U.shape[-1]:
        flat = np.ascontiguousarray(U.reshape(-1, U.shape[-1]))
        G = np.empty_like(flat)
        _flux_kernel(flat, params.tensors.A, params.g, G)
        return G.reshape(U.shape)
    return _flux_numpy(U, params)


def _flux_numpy(U: np.ndarray, params: ModelParams) -> np.ndarray:
    h = U[..., H]
    inv_h = 1.0 / h
    u = U[..., HU] * inv_h
    v = U[..., HV] * inv_h
    a = U[..., HA] * inv_h
    b = U[..., HB] * inv_h
    M = params.order

    G = np.zeros_like(U)
    G[..., H] = U[..., HV]
    if M == 0:
        G[..., HU] = h * (u * v - a * b)
        G[..., HV] = h * (v * v - b * b) + 0.5 * params.g * h * h
        G[..., HA] = h * (a * v - b * u)
        return G

    P = U[..., 5:].reshape(U.shape[:-1] + (M, 4)) * inv_h[..., None, None]
    al, be, ga, et = (P[..., c] for c in range(4))
    wl = 1.0 / (2.0 * np.arange(1, M + 1) + 1.0)

    G[..., HU] = h * (u * v - a * b + (al * be - ga * et) @ wl)
    G[..., HV] = h * (v * v - b * b + (be * be - et * et) @ wl) + 0.5 * params.g * h * h
    G[..., HA] = h * (a * v - b * u + (be * ga - al * et) @ wl)

    # the six coupling sums A_iln x_l y_n as one batched matmul
    X = np.stack([al, ga, be, et, be, al], axis=-2)          # (..., 6, M)
    Y = np.stack([be, et, be, et, ga, et], axis=-2)
    prod = (X[..., :, :, None] * Y[..., :, None, :]).reshape(
        U.shape[:-1] + (6, M * M))
    AS = prod @ (params.a_matrix.astype(U.dtype)
                 if np.iscomplexobj(U) else params.a_matrix)  # (..., 6, M)

    hh = h[..., None]
    blocks = np.empty(U.shape[:-1] + (M, 4), dtype=U.dtype)
    blocks[..., ALPHA] = hh * (u[..., None] * be + v[..., None] * al
                               - a[..., None] * et - b[..., None] * ga
                               + AS[..., 0, :] - AS[..., 1, :])
    blocks[..., BETA] = hh * (2.0 * (v[..., None] * be - b[..., None] * et)
                              + AS[..., 2, :] - AS[..., 3, :])
    blocks[..., GAMMA] = hh * (a[..., None] * be + v[..., None] * ga
                               - b[..., None] * al - u[..., None] * et
                               + AS[..., 4, :] - AS[..., 5, :])
    blocks[..., ETA] = 0.0
    G[..., 5:] = blocks.reshape(U.shape[:-1] + (4 * M,))
    return G


def _flux_kernel_impl(U, A, g, G):
    n_states, nvar = U.shape
    M = (nvar - 5) // 4
    for s in range(n_states):
        h = U[s, 0]
        inv = 1.0 / h
        u = U[s, 1] * inv
        v = U[s, 2] * inv
        a = U[s, 3] * inv
        b = U[s, 4] * inv
        zero = h * 0.0
        s_uv = zero
        s_vv = zero
        s_av = zero
        for l in range(M):
            w = 1.0 / (2.0 * (l + 1) + 1.0)
            al = U[s, 5 + 4 * l] * inv
            be = U[s, 6 + 4 * l] * inv
            ga = U[s, 7 + 4 * l] * inv
            et = U[s, 8 + 4 * l] * inv
            s_uv += (al * be - ga * et) * w
            s_vv += (be * be - et * et) * w
            s_av += (be * ga - al * et) * w
        G[s, 0] = U[s, 2]
        G[s, 1] = h * (u * v - a * b + s_uv)
        G[s, 2] = h * (v * v - b * b + s_vv) + 0.5 * g * h * h
        G[s, 3] = h * (a * v - b * u + s_av)
        G[s, 4] = zero
        for i in range(M):
            be_i = U[s, 6 + 4 * i] * inv
            al_i = U[s, 5 + 4 * i] * inv
            ga_i = U[s, 7 + 4 * i] * inv
            et_i = U[s, 8 + 4 * i] * inv
            c_a = zero
            c_b = zero
            c_g = zero
            for l in range(M):
                al_l = U[s, 5 + 4 * l] * inv
                be_l = U[s, 6 + 4 * l] * inv
                ga_l = U[s, 7 + 4 * l] * inv
                et_l = U[s, 8 + 4 * l] * inv
                for n in range(M):
                    w = A[i, l, n]
                    if w != 0.0:
                        al_n = U[s, 5 + 4 * n] * inv
                        be_n = U[s, 6 + 4 * n] * inv
                        ga_n = U[s, 7 + 4 * n] * inv
                        et_n = U[s, 8 + 4 * n] * inv
                        c_a += w * (al_l * be_n - ga_l * et_n)
                        c_b += w * (be_l * be_n - et_l * et_n)
                        c_g += w * (be_l * ga_n - al_l * et_n)
            base = 5 + 4 * i
            G[s, base + 0] = h * (u * be_i + v * al_i - a * et_i - b * ga_i + c_a)
            G[s, base + 1] = h * (2.0 * (v * be_i - b * et_i) + c_b)
            G[s, base + 2] = h * (a * be_i + v * ga_i - b * al_i - u * et_i + c_g)
            G[s, base + 3] = zero


if njit is not None:
    _flux_kernel = njit(cache=True)(_flux_kernel_impl)
else:                                                   # pragma: no cover
    _flux_kernel = _flux_kernel_impl


def source_s(U: np.ndarray, f, z_y, g: float) -> np.ndarray:
    """Coriolis and bathymetry source; ``f`` and ``z_y`` broadcast over cells."""
    U = np.asarray(U, dtype=float)
    f = np.asarray(f, dtype=float)
    z_y = np.asarray(z_y, dtype=float)
    S = np.zeros_like(U)
    S[..., HU] = f * U[..., HV]
    S[..., HV] = -f * U[..., HU] - g * U[..., H] * z_y
    M = (U.shape[-1] - 5) // 4
    for i in range(1, M + 1):
        S[..., moment_index(i, ALPHA)] = f * U[..., moment_index(i, BETA)]
        S[..., moment_index(i, BETA)] = -f * U[..., moment_index(i, ALPHA)]
    return S


def coupling_tensor(tensors: ClosureTensors) -> np.ndarray:
    """Constant tensor T with Q(U)[r, c] = sum_k T[r, c, k] U[k] / h.

    Columns c with any nonzero entry are hb_m and the h*beta_l / h*eta_l
    moment components; those are the only gradients entering the
    nonconservative products of the 1-D system.
    """
    M = tensors.order
    n = n_vars(M)
    T = np.zeros((n, n, n))
    phi1 = tensors.phi_at_one
    Gam = tensors.Gamma
    B = tensors.B

    # mean rows, hb_m column: -(surface value) of (a, b, u, v)
    for row, comp in ((HU, HA), (HV, HB), (HA, HU), (HB, HV)):
        T[row, HB, comp] = -1.0
        for l in range(M):
            T[row, HB, moment_index(l + 1, {HA: GAMMA, HB: ETA,
                                            HU: ALPHA, HV: BETA}[comp])] = -phi1[l]

    for i in range(M):
        ra = moment_index(i + 1, ALPHA)
        rb = moment_index(i + 1, BETA)
        rg = moment_index(i + 1, GAMMA)
        re = moment_index(i + 1, ETA)
        for l in range(M):
            ca = moment_index(l + 1, ALPHA)
            cb = moment_index(l + 1, BETA)
            cg = moment_index(l + 1, GAMMA)
            ce = moment_index(l + 1, ETA)
            w = 1.0 + Gam[i, l]
            T[ra, HB, cg] = -w
            T[rb, HB, ce] = -w
            T[rg, HB, ca] = -w
            T[re, HB, cb] = -w
            if i == l:
                T[ra, cb, HU] += 1.0
                T[rb, cb, HV] += 1.0
                T[rg, cb, HA] += 1.0
                T[re, cb, HB] += 1.0
                T[ra, ce, HA] -= 1.0
                T[rb, ce, HB] -= 1.0
                T[rg, ce, HU] -= 1.0
                T[re, ce, HV] -= 1.0
            for nn in range(M):
                Bval = B[i, l, nn]
                T[ra, cb, moment_index(nn + 1, ALPHA)] -= Bval
                T[rb, cb, moment_index(nn + 1, BETA)] -= Bval
                T[rg, cb, moment_index(nn + 1, GAMMA)] -= Bval
                T[re, cb, moment_index(nn + 1, ETA)] -= Bval
                T[ra, ce, moment_index(nn + 1, GAMMA)] += Bval
                T[rb, ce, moment_index(nn + 1, ETA)] += Bval
                T[rg, ce, moment_index(nn + 1, ALPHA)] += Bval
                T[re, ce, moment_index(nn + 1, BETA)] += Bval
    return T


def noncons_columns(order: int) -> list[int]:
    """State components whose y-gradients appear in Q(U) U_y."""
    cols = [HB]
    for i in range(1, order + 1):
        cols.append(moment_index(i, BETA))
        cols.append(moment_index(i, ETA))
    return cols


_Q_TENSOR_CACHE: "weakref.WeakKeyDictionary[ClosureTensors, np.ndarray]" = None


def noncons_q(U: np.ndarray, tensors: ClosureTensors,
              h_min: float = DEFAULT_H_MIN) -> np.ndarray:
    """Nonconservative matrix Q(U); batched as (..., n, n)."""
    global _Q_TENSOR_CACHE
    U = np.asarray(U, dtype=float)
    if np.any(U[..., H] <= h_min):
        check_valid(U, h_min)
    if _Q_TENSOR_CACHE is None:
        _Q_TENSOR_CACHE = weakref.WeakKeyDictionary()
    T = _Q_TENSOR_CACHE.get(tensors)
    if T is None:
        T = coupling_tensor(tensors)
        _Q_TENSOR_CACHE[tensors] = T
    return np.einsum("rck,...k->...rc", T, U) / U[..., H][..., None, None]


def jacobian(U: np.ndarray, params: ModelParams) -> np.ndarray:
    """J(U) = dG/dU - Q(U), batched along leading axes.

    dG/dU is formed by complex-step differentiation, which is free of
    subtractive cancellation; the flux is rational in U, so the derivative
    comes out accurate to machine precision for any order.
    """
    U = np.asarray(U, dtype=float)
    n = U.shape[-1]
    eps = params.deriv_eps * np.maximum(1.0, np.abs(U))
    Z = np.zeros((n,) + U.shape, dtype=complex)
    Z.real[...] = U
    for k in range(n):
        Z.imag[k, ..., k] = eps[..., k]
    dG = flux_g(Z, params).imag                            # (n, ..., n)
    dG /= np.moveaxis(eps, -1, 0)[..., None]
    # axes: dG[k, ..., r] = dG_r/dU_k  ->  J[..., r, k]
    J = np.moveaxis(dG, 0, -1)
    Q = (U @ params.q_matrix).reshape(U.shape[:-1] + (n, n))
    return J - Q / U[..., H][..., None, None]


def eigenvalues(U: np.ndarray, params: ModelParams) -> np.ndarray:
    """Complex spectrum of J(U), batched along leading axes."""
    return np.linalg.eigvals(jacobian(U, params))


def _real_spectrum(lam: np.ndarray, tol_im: float,
                   context: str) -> tuple[np.ndarray, float]:
    """Project eigenvalues to the real axis, policing the imaginary part.

    The contamination ratio max|Im| / max|Re| is evaluated per state; a
    ratio above ``tol_im`` means genuine loss of hyperbolicity and raises.
    Returns the real parts and the worst ratio for logging.
    """
    im = np.abs(lam.imag).max(axis=-1)
    re = np.maximum(np.abs(lam.real).max(axis=-1), 1e-14)
    ratio = im / re
    worst = float(ratio.max()) if ratio.size else 0.0
    if worst > tol_im:
        idx = int(np.argmax(ratio))
        raise HyperbolicityError(
            f"complex eigenvalue ratio {worst:.3e} exceeds {tol_im:.3e} "
            f"({context}, flat state index {idx})",
            ratio=worst, location=idx)
    return lam.real, worst


def interface_speeds(U_left: np.ndarray, U_right: np.ndarray,
                     params: ModelParams,
                     tol_im: float | None = None) -> tuple[np.ndarray, np.ndarray, float]:
    """One-sided speed bounds s-, s+ for a batch of interfaces.

    s+ = max(spectrum(left), spectrum(right), 0) and s- the analogous
    minimum; eigenvalues with small imaginary parts are projected onto the
    real axis, and the worst contamination ratio is returned for logging.
    """
    tol = params.tol_im if tol_im is None else tol_im
    stacked = np.concatenate([np.atleast_2d(U_left), np.atleast_2d(U_right)])
    lam, ratio = _real_spectrum(eigenvalues(stacked, params), tol,
                                "interface states")
    half = stacked.shape[0] // 2
    both = np.concatenate([lam[:half], lam[half:]], axis=-1)
    s_plus = np.maximum(both.max(axis=-1), 0.0)
    s_minus = np.minimum(both.min(axis=-1), 0.0)
    return s_minus, s_plus, ratio


def local_speeds(U_left: np.ndarray, U_right: np.ndarray,
                 params: ModelParams,
                 tol_im: float | None = None) -> tuple[float, float]:
    """Speed bounds (s-, s+) for a single interface."""
    sm, sp, _ = interface_speeds(np.asarray(U_left, dtype=float)[None, :],
                                 np.asarray(U_right, dtype=float)[None, :],
                                 params, tol_im)
    return float(sm[0]), float(sp[0])
