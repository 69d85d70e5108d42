"""Hotspot localization from a pixel temperature-rise map.

The inverse problem fits one rectangular source of known size to the
map: position (x, y) in the card frame and a strength (surface
temperature in C for prescribed sources, drive power in W for driven
ones).  A coarse grid search at half-pitch spacing seeds a damped
Gauss-Newton refinement with a central-difference Jacobian.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from irsense.errors import NoDetectionError, PreconditionError
from irsense.radiation import DEFAULT_ORDER, Patch
from irsense.thermal_network import HeatSource, build_network, pixel_name, plate_map, solve_steady

NOISE_FLOOR = 0.2  # C
POSITION_STEP = 5e-4  # m, central-difference step
STRENGTH_STEP = 0.01  # relative
POSITION_TOL = 1e-4  # m
STRENGTH_TOL = 1e-6  # relative
MAX_ITER = 50
MIN_GAP = 0.010


@dataclass
class RiseMap:
    rises: np.ndarray
    gap: float
    mask: Optional[np.ndarray] = None  # True marks a dead / excluded pixel

    def __post_init__(self):
        self.rises = np.asarray(self.rises, dtype=float)
        if self.mask is None:
            self.mask = np.zeros(self.rises.shape, dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.rises.shape:
            raise PreconditionError("mask shape does not match the rise grid")

    @property
    def shape(self):
        return self.rises.shape

    def valid(self):
        return ~self.mask

    def scaled(self, factor):
        return RiseMap(self.rises * factor, self.gap, self.mask.copy())

    def mirrored(self, axis):
        return RiseMap(np.flip(self.rises, axis=axis), self.gap, np.flip(self.mask, axis=axis))


@dataclass(frozen=True)
class SourceEstimate:
    x: float
    y: float
    strength: float
    residual: float
    covariance: np.ndarray = field(compare=False)
    converged: bool = True
    iterations: int = 0
    driven: bool = False


class ArgmaxResult(tuple):
    """``(row, col)`` of the hottest pixel with tie information attached."""

    def __new__(cls, pixel, tied):
        obj = super().__new__(cls, pixel)
        obj.tied = list(tied)
        return obj

    @property
    def is_tie(self):
        return len(self.tied) > 1

    @property
    def name(self):
        return pixel_name(*self)


def _check_card(rise_map, card):
    if rise_map.shape != (card.rows, card.cols):
        raise PreconditionError(
            f"rise map is {rise_map.shape} but the card is {card.rows}x{card.cols}")


def forward_rise_map(source, card, gap=None, ambient=21.0, order=DEFAULT_ORDER):
    """Steady plate rises over ambient produced by ``source`` at ``gap``."""
    if gap is None:
        gap = source.patch.plane_gap
    if gap < MIN_GAP * (1 - 1e-12):
        raise PreconditionError(f"gap must be at least {MIN_GAP} m, got {gap}")
    p = source.patch
    placed = HeatSource(Patch(p.center_x, p.center_y, p.width, p.height, gap, p.emissivity),
                        source.temperature, source.power, source.resistance, source.capacitance)
    net = build_network(card, ambient, order)
    temps = solve_steady(net, [placed])
    return RiseMap(plate_map(net, temps) - ambient, gap)


def locate_argmax(rise_map, noise_floor=NOISE_FLOOR, rel_tie=1e-9):
    """Hottest unmasked pixel; ties resolve to the lowest row-major index."""
    values = np.where(rise_map.valid(), rise_map.rises, -np.inf)
    best = values.max()
    if not np.isfinite(best) or best < noise_floor:
        raise NoDetectionError(f"no unmasked pixel rises above the {noise_floor} C noise floor")
    tol = rel_tie * abs(best)
    tied = [tuple(int(v) for v in idx) for idx in np.argwhere(values >= best - tol)]
    return ArgmaxResult(tied[0], tied)


class ForwardModel:
    """Cached steady forward map for a fixed card, gap and source template."""

    def __init__(self, card, gap, template, ambient=21.0, order=DEFAULT_ORDER):
        self.card = card
        self.gap = gap
        self.template = template
        self.ambient = ambient
        self.base = build_network(card, ambient, order)

    def source(self, x, y, strength):
        t = self.template
        patch = Patch(x, y, t.patch.width, t.patch.height, self.gap, t.patch.emissivity)
        if t.is_driven:
            return HeatSource(patch, power=strength, resistance=t.resistance, capacitance=t.capacitance)
        return HeatSource(patch, temperature=strength)

    def rises(self, x, y, strength):
        net = self.base.copy()  # driven sources add a node; keep the template clean
        temps = solve_steady(net, [self.source(x, y, strength)])
        return plate_map(net, temps) - self.ambient


_MODEL_CACHE = {}


def _forward_model(card, gap, template, ambient, order):
    key = (card, gap, template.patch.width, template.patch.height, template.patch.emissivity,
           template.is_driven, template.resistance, template.capacitance, ambient, order)
    model = _MODEL_CACHE.get(key)
    if model is None:
        model = ForwardModel(card, gap, template, ambient, order)
        if len(_MODEL_CACHE) > 32:
            _MODEL_CACHE.clear()
        _MODEL_CACHE[key] = model
    return model


def _default_template(source_size, driven, emissivity=0.95):
    patch = Patch(0.0, 0.0, source_size[0], source_size[1], 1.0, emissivity)
    if driven:
        return HeatSource.driven(patch, 1.0)
    return HeatSource.prescribed(patch, 60.0)


def _grid_axis(half_extent, pitch):
    limit = half_extent + pitch
    n = int(np.floor(limit / (pitch / 2) + 1e-9))
    return np.arange(-n, n + 1) * (pitch / 2)


def locate_refined(rise_map, card, gap=None, source_size=0.016, template=None,
                   ambient=21.0, order=DEFAULT_ORDER, noise_floor=NOISE_FLOOR,
                   tol=POSITION_TOL, max_iter=MAX_ITER):
    """Least-squares estimate of a single source's position and strength.

    ``source_size`` is an edge length or a ``(width, height)`` pair.
    ``template`` selects the source mode (prescribed temperature by
    default) and supplies emissivity and, for driven sources, the body's
    resistance and capacitance.
    """
    _check_card(rise_map, card)
    locate_argmax(rise_map, noise_floor)
    gap = rise_map.gap if gap is None else gap
    if np.isscalar(source_size):
        source_size = (float(source_size), float(source_size))
    if template is None:
        template = _default_template(source_size, driven=False)
    else:
        p = template.patch
        template = HeatSource(Patch(0.0, 0.0, source_size[0], source_size[1], gap, p.emissivity),
                              template.temperature, template.power, template.resistance,
                              template.capacitance)
    model = _forward_model(card, gap, template, ambient, order)
    valid = rise_map.valid()
    observed = rise_map.rises[valid]
    driven = template.is_driven

    # strength is fitted as a rise over ambient (prescribed) or as watts (driven)
    def to_strength(u):
        return u if driven else ambient + u

    def residual(p):
        return observed - model.rises(p[0], p[1], to_strength(p[2]))[valid]

    # coarse search: the map is close to linear in strength, so fit the
    # scale in closed form at each candidate position
    reference = 1.0 if driven else 40.0
    hx, hy = card.half_extent()
    xs, ys = _grid_axis(hx, card.pitch), _grid_axis(hy, card.pitch)
    best = None
    for y in ys:
        for x in xs:
            unit = model.rises(x, y, to_strength(reference))[valid]
            norm = unit @ unit
            scale = (unit @ observed) / norm if norm > 0 else 0.0
            cost = np.sum((observed - scale * unit) ** 2)
            if best is None or cost < best[0]:
                best = (cost, np.array([x, y, max(scale, 1e-3) * reference]))
    params = best[1]
    bounds = np.array([hx + card.pitch, hy + card.pitch])

    r = residual(params)
    cost = r @ r
    converged = False
    jac = None
    iterations = 0
    for iterations in range(1, max_iter + 1):
        steps = np.array([POSITION_STEP, POSITION_STEP, max(abs(params[2]) * STRENGTH_STEP, 1e-6)])
        jac = np.empty((observed.size, 3))
        for k in range(3):
            dp = np.zeros(3)
            dp[k] = steps[k]
            # residual = observed - model, so d(model)/dp = -d(residual)/dp
            jac[:, k] = (residual(params - dp) - residual(params + dp)) / (2 * steps[k])
        delta, *_ = np.linalg.lstsq(jac, r, rcond=None)
        alpha = 1.0
        while True:
            trial = params + alpha * delta
            trial[:2] = np.clip(trial[:2], -bounds, bounds)
            trial[2] = max(trial[2], 1e-6)
            trial_r = residual(trial)
            trial_cost = trial_r @ trial_r
            if trial_cost <= cost or alpha < 1e-3:
                break
            alpha *= 0.5
        step = trial - params
        if trial_cost <= cost:
            params, r, cost = trial, trial_r, trial_cost
        if np.hypot(step[0], step[1]) < tol and abs(step[2]) <= STRENGTH_TOL * abs(params[2]):
            converged = True
            break

    rms = float(np.sqrt(cost / observed.size))
    dof = max(observed.size - 3, 1)
    sigma2 = cost / dof
    try:
        cov = sigma2 * np.linalg.inv(jac.T @ jac)[:2, :2]
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.inf)
    return SourceEstimate(float(params[0]), float(params[1]), float(to_strength(params[2])),
                          rms, cov, converged, iterations, driven)
