"""1D Hermite spline kernels on [-1, 1] and their tensor products.

A kernel of order ``n`` holds ``n + 1`` modes.  Mode ``i`` is the piecewise
polynomial of degree ``2n + 1`` whose value and first ``n`` derivatives vanish
at the support points ``x = -1, 0, 1`` except the ``i``-th derivative at 0.
Each mode is rescaled so that ``max |h_i(x)| = 1``; the resulting magnitude of
the ``i``-th derivative at 0 is kept in ``scale[i]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, DerivativeOrderError

MAX_ORDER = 4

LEFT = 0   # piece on [-1, 0]
RIGHT = 1  # piece on [0, 1]


def _falling(k: int, d: int) -> float:
    """k!/(k-d)! — coefficient picked up by differentiating x**k d times."""
    if d > k:
        return 0.0
    return math.factorial(k) // math.factorial(k - d)


def _poly_deriv(coeffs: np.ndarray, d: int) -> np.ndarray:
    """d-th derivative of an ascending-monomial coefficient vector."""
    c = np.asarray(coeffs, dtype=float)
    for _ in range(d):
        c = c[1:] * np.arange(1, c.size)
    if c.size == 0:
        c = np.zeros(1)
    return c


def _polyval(coeffs: np.ndarray, x):
    """Horner evaluation; works on scalars and numpy arrays."""
    acc = np.zeros_like(np.asarray(x, dtype=float))
    for c in coeffs[::-1]:
        acc = acc * x + c
    return acc


def _right_piece(n: int, i: int) -> np.ndarray:
    """Solve the Hermite endpoint constraints for mode i on [0, 1].

    Constraints: p^(j)(0) = delta_ij and p^(j)(1) = 0 for j = 0..n, with p of
    degree 2n+1.  The first n+1 coefficients follow directly from the
    derivatives at 0; the rest solve a dense (n+1)x(n+1) system.
    """
    deg = 2 * n + 1
    coeffs = np.zeros(deg + 1)
    coeffs[i] = 1.0 / math.factorial(i)
    mat = np.empty((n + 1, n + 1))
    rhs = np.empty(n + 1)
    for j in range(n + 1):
        for col, k in enumerate(range(n + 1, deg + 1)):
            mat[j, col] = _falling(k, j)
        rhs[j] = -sum(coeffs[k] * _falling(k, j) for k in range(n + 1))
    coeffs[n + 1:] = np.linalg.solve(mat, rhs)
    return coeffs


def _max_abs_on_unit(coeffs: np.ndarray) -> float:
    """Exact max of |p| on [0, 1] via the critical points of p."""
    dcoeffs = _poly_deriv(coeffs, 1)
    candidates = [0.0, 1.0]
    if dcoeffs.size > 1:
        roots = np.roots(dcoeffs[::-1])
        for r in roots:
            if abs(r.imag) < 1e-12 and -1e-12 <= r.real <= 1 + 1e-12:
                candidates.append(float(np.clip(r.real, 0.0, 1.0)))
    return max(abs(float(_polyval(coeffs, x))) for x in candidates)


@dataclass(frozen=True)
class KernelTable:
    """Piecewise-polynomial Hermite basis of one order.

    ``pieces[i]`` holds the ascending monomial coefficients of mode ``i`` on
    [-1, 0] and on [0, 1].  ``scale[i]`` is the magnitude of the i-th
    derivative at 0 after rescaling to max |h_i| = 1.
    """

    order: int
    pieces: tuple  # ((left, right), ...) ascending monomial coefficient arrays
    scale: tuple   # per-mode i-th-derivative magnitude at 0

    @property
    def modes(self) -> int:
        return self.order + 1

    def piece_coeffs(self, mode: int, side: int, deriv: int = 0) -> np.ndarray:
        """Monomial coefficients of the requested derivative of one piece."""
        self._check(mode, deriv)
        return _poly_deriv(self.pieces[mode][side], deriv)

    def _check(self, mode: int, deriv: int) -> None:
        if not 0 <= mode <= self.order:
            raise ConfigError(f"mode {mode} out of range for order {self.order}")
        if deriv < 0 or deriv > self.order + 1:
            raise DerivativeOrderError(
                f"derivative order {deriv} not available for order-{self.order} "
                f"kernels (max {self.order + 1})")

    def __call__(self, mode: int, x, deriv: int = 0):
        """Evaluate the deriv-th derivative of mode at x; 0 outside (-1, 1).

        Scalar in, scalar out; numpy array in, array out.  The junction x = 0
        evaluates the right piece, |x| >= 1 evaluates to exactly 0.
        """
        self._check(mode, deriv)
        x_arr = np.asarray(x, dtype=float)
        out = np.zeros_like(x_arr)
        right = (x_arr >= 0.0) & (x_arr < 1.0)
        left = (x_arr > -1.0) & (x_arr < 0.0)
        if np.any(right):
            out[right] = _polyval(self.piece_coeffs(mode, RIGHT, deriv), x_arr[right])
        if np.any(left):
            out[left] = _polyval(self.piece_coeffs(mode, LEFT, deriv), x_arr[left])
        if np.isscalar(x) or np.ndim(x) == 0:
            return float(out)
        return out


@lru_cache(maxsize=None)
def build_kernel(n: int) -> KernelTable:
    """Construct the order-n Hermite kernel basis, rescaled to [-1, 1]."""
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise ConfigError(f"kernel order must be an integer, got {n!r}")
    if n < 0 or n > MAX_ORDER:
        raise ConfigError(f"kernel order {n} outside supported range [0, {MAX_ORDER}]")
    pieces = []
    scales = []
    for i in range(n + 1):
        right = _right_piece(n, i)
        peak = _max_abs_on_unit(right)
        right = right / peak
        # odd/even symmetry h_i(-x) = (-1)^i h_i(x)
        signs = np.array([(-1.0) ** (i + k) for k in range(right.size)])
        left = right * signs
        pieces.append((left, right))
        scales.append(1.0 / peak)
    return KernelTable(order=n, pieces=tuple(pieces), scale=tuple(scales))


def eval_kernel(kernel: KernelTable, mode: int, x, deriv: int = 0):
    """Functional form of KernelTable.__call__ (see there)."""
    return kernel(mode, x, deriv)


@dataclass(frozen=True)
class TensorKernelSpec:
    """One (x, y, t) tensor-product mode of a separable spline basis."""

    spatial_orders: tuple  # (l, m)
    temporal_order: int
    mode: tuple            # (i, j, k)

    def __post_init__(self):
        l, m = self.spatial_orders
        i, j, k = self.mode
        for order in (l, m, self.temporal_order):
            if order < 0 or order > MAX_ORDER:
                raise ConfigError(f"order {order} outside supported range")
        if not (0 <= i <= l and 0 <= j <= m and 0 <= k <= self.temporal_order):
            raise ConfigError(f"mode {self.mode} out of range for orders "
                              f"{(l, m, self.temporal_order)}")

    @property
    def modes_per_node(self) -> int:
        l, m = self.spatial_orders
        return (l + 1) * (m + 1) * (self.temporal_order + 1)


def tensor_eval(spec: TensorKernelSpec, dx: float, dy: float, dtau: float,
                deriv=(0, 0, 0)) -> float:
    """Product of the three 1D kernel evaluations with per-axis derivatives."""
    l, m = spec.spatial_orders
    i, j, k = spec.mode
    dxo, dyo, dto = deriv
    kx = build_kernel(l)
    ky = build_kernel(m)
    kt = build_kernel(spec.temporal_order)
    return kx(i, dx, dxo) * ky(j, dy, dyo) * kt(k, dtau, dto)
