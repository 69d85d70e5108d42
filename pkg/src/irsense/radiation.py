"""View factors and gray-body exchange between parallel rectangular patches.

Both patches are axis-aligned rectangles lying in two parallel planes a
distance ``plane_gap`` apart and facing each other.  Coordinates are in
metres in the shared plane frame; temperatures here are in kelvin.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numba
import numpy as np

from irsense.errors import DomainError, GeometryError

SIGMA = 5.670374419e-8  # W m^-2 K^-4
MIN_GAP = 1e-3  # m; the kernel is treated as singular below this
DEFAULT_ORDER = 16


@dataclass(frozen=True)
class Patch:
    center_x: float
    center_y: float
    width: float
    height: float
    plane_gap: float
    emissivity: float = 0.95

    @property
    def area(self):
        return self.width * self.height

    def moved(self, dx=0.0, dy=0.0):
        return Patch(self.center_x + dx, self.center_y + dy, self.width,
                     self.height, self.plane_gap, self.emissivity)


def _check_patch(p):
    if not (p.width > 0 and p.height > 0):
        raise GeometryError(f"patch dimensions must be positive, got {p.width} x {p.height}")
    if not p.plane_gap > 0:
        raise GeometryError(f"plane_gap must be positive, got {p.plane_gap}")
    if p.plane_gap < MIN_GAP:
        raise GeometryError(f"plane_gap {p.plane_gap} m is below the {MIN_GAP} m minimum")
    if not 0.0 <= p.emissivity <= 1.0:
        raise GeometryError(f"emissivity must lie in [0, 1], got {p.emissivity}")


def _check_pair(a, b):
    _check_patch(a)
    _check_patch(b)
    if not math.isclose(a.plane_gap, b.plane_gap, rel_tol=1e-12, abs_tol=0.0):
        raise GeometryError(
            f"patches disagree on plane separation ({a.plane_gap} vs {b.plane_gap})")


@lru_cache(maxsize=None)
def _gauss_legendre(order):
    return np.polynomial.legendre.leggauss(order)


def _axis_rule(center, size, gap, order):
    """Composite Gauss-Legendre nodes/weights along one patch edge.

    Panels are no wider than four plane gaps, which keeps the near-field
    peak of the kernel resolved for large patches.  The panel count only
    depends on the patch itself, so the double sum stays symmetric in its
    two arguments (exact reciprocity).
    """
    n_panels = max(1, math.ceil(size / (4.0 * gap)))
    t, w = _gauss_legendre(order)
    h = size / n_panels
    starts = center - 0.5 * size + h * np.arange(n_panels)
    nodes = (starts[:, None] + 0.5 * h * (t[None, :] + 1.0)).ravel()
    weights = np.tile(0.5 * h * w, n_panels)
    return nodes, weights


@numba.njit(cache=True)
def _weighted_kernel_sum(dx2, wx, dy2, wy, g2):
    total = 0.0
    for i in range(dx2.size):
        inner = 0.0
        for j in range(dy2.size):
            s2 = dx2[i] + dy2[j] + g2
            inner += wy[j] / (s2 * s2)
        total += wx[i] * inner
    return total * g2 / np.pi


def _kernel_integral(a, b, order):
    """Integral of cos*cos/(pi s^2) over both patches (= area_a * F_ab)."""
    xa, wxa = _axis_rule(a.center_x, a.width, a.plane_gap, order)
    ya, wya = _axis_rule(a.center_y, a.height, a.plane_gap, order)
    xb, wxb = _axis_rule(b.center_x, b.width, b.plane_gap, order)
    yb, wyb = _axis_rule(b.center_y, b.height, b.plane_gap, order)
    dx2 = np.subtract.outer(xa, xb).ravel() ** 2
    dy2 = np.subtract.outer(ya, yb).ravel() ** 2
    wx = np.outer(wxa, wxb).ravel()
    wy = np.outer(wya, wyb).ravel()
    return _weighted_kernel_sum(dx2, wx, dy2, wy, a.plane_gap ** 2)


def view_factor(a, b, order=DEFAULT_ORDER):
    """Diffuse view factor F_ab from patch ``a`` to the facing patch ``b``."""
    _check_pair(a, b)
    return _kernel_integral(a, b, order) / a.area


def exchange_power(a, t_a, b, t_b, order=DEFAULT_ORDER, view=None):
    """Net radiant power (W) from ``a`` at ``t_a`` K to ``b`` at ``t_b`` K.

    Multiple reflections are neglected, which is adequate for near-black
    surfaces.  ``view`` overrides the computed F_ab.
    """
    if not (t_a > 0 and t_b > 0):
        raise DomainError(f"temperatures must be positive kelvin, got {t_a}, {t_b}")
    if view is None:
        view = view_factor(a, b, order)
    return SIGMA * a.area * view * a.emissivity * b.emissivity * (t_a ** 4 - t_b ** 4)


def radiation_conductance(a, b, t_mean, order=DEFAULT_ORDER, view=None):
    """Linearised exchange conductance (W/K) about ``t_mean`` kelvin."""
    if not t_mean > 0:
        raise DomainError(f"mean temperature must be positive kelvin, got {t_mean}")
    if view is None:
        view = view_factor(a, b, order)
    return 4.0 * SIGMA * a.area * view * a.emissivity * b.emissivity * t_mean ** 3
