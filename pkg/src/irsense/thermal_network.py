"""Lumped RC model of the sensor card and its radiative coupling to sources.

Each pixel contributes two nodes: the black copper plate (with the board
material under its footprint) and the sensor die glued onto it.  Plates
lose heat to ambient by convection and linearised radiation, and are
coupled to their grid neighbours through the board.  Heat sources on the
measured board inject power into plate nodes by gray-body radiation.

Temperatures are in degrees Celsius unless a name says otherwise.
"""

from collections import deque
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from irsense.errors import NetworkError, NumericalError, PreconditionError, SolverError
from irsense.radiation import DEFAULT_ORDER, SIGMA, Patch, view_factor

KELVIN = 273.15

# Die attach resistance of the two adhesive variants (K/W).
ATTACH_CONDUCTIVE = 5.0
ATTACH_NONCONDUCTIVE = 50.0

COPPER_HEAT_CAPACITY = 8960.0 * 385.0  # J m^-3 K^-1
FR4_HEAT_CAPACITY = 1850.0 * 1100.0  # J m^-3 K^-1


@dataclass(frozen=True)
class CardSpec:
    """Geometry and materials of the sensor card.

    The default is the first 4x4 board with conductive die attach;
    :meth:`second_board` gives the 2x4 variant with non-conductive glue.
    """

    rows: int = 4
    cols: int = 4
    pixel_size: float = 0.010
    pitch: float = 0.0125
    copper_thickness: float = 35e-6
    board_thickness: float = 1.55e-3
    attach_resistance: float = ATTACH_CONDUCTIVE
    plate_emissivity: float = 0.95
    film_coefficient: float = 8.0
    board_conductivity: float = 0.3
    die_capacitance: float = 1e-3
    die_size: float = 0.002
    copper_heat_capacity: float = COPPER_HEAT_CAPACITY
    board_heat_capacity: float = FR4_HEAT_CAPACITY

    @classmethod
    def second_board(cls, **overrides):
        params = dict(rows=2, cols=4, attach_resistance=ATTACH_NONCONDUCTIVE)
        params.update(overrides)
        return cls(**params)

    def validate(self):
        if self.rows < 1 or self.cols < 1:
            raise PreconditionError(f"grid must have at least one pixel, got {self.rows}x{self.cols}")
        if self.rows > 16 or self.cols > 16:
            raise PreconditionError("the readout address space is limited to 16x16 pixels")
        positive = ("pixel_size", "pitch", "copper_thickness", "board_thickness",
                    "attach_resistance", "die_capacitance", "die_size",
                    "copper_heat_capacity", "board_heat_capacity")
        for name in positive:
            if not getattr(self, name) > 0:
                raise PreconditionError(f"{name} must be positive, got {getattr(self, name)}")
        if self.pitch < self.pixel_size:
            raise PreconditionError("pitch must not be smaller than pixel_size")
        if self.die_size > self.pixel_size:
            raise PreconditionError("die footprint exceeds the pixel plate")
        if not 0.0 <= self.plate_emissivity <= 1.0:
            raise PreconditionError("plate_emissivity must lie in [0, 1]")
        if self.film_coefficient < 0 or self.board_conductivity < 0:
            raise PreconditionError("film_coefficient and board_conductivity must be >= 0")

    @property
    def n_pixels(self):
        return self.rows * self.cols

    def pixels(self):
        """Pixel indices in row-major (readout) order."""
        return [(r, c) for r in range(self.rows) for c in range(self.cols)]

    def pixel_center(self, row, col):
        """Pixel centre in the card plane; the grid centre is the origin."""
        x = (col - (self.cols - 1) / 2.0) * self.pitch
        y = (row - (self.rows - 1) / 2.0) * self.pitch
        return x, y

    def pixel_patch(self, row, col, gap):
        x, y = self.pixel_center(row, col)
        return Patch(x, y, self.pixel_size, self.pixel_size, gap, self.plate_emissivity)

    def half_extent(self):
        """Half width/height of the populated card area (x, y)."""
        return ((self.cols - 1) * self.pitch + self.pixel_size) / 2.0, \
               ((self.rows - 1) * self.pitch + self.pixel_size) / 2.0

    def plate_capacitance(self):
        footprint = self.pixel_size ** 2
        return footprint * (self.copper_thickness * self.copper_heat_capacity
                            + self.board_thickness * self.board_heat_capacity)

    def exposed_area(self):
        return 2.0 * self.pixel_size ** 2 - self.die_size ** 2

    def ambient_conductance(self, ambient):
        h_rad = 4.0 * SIGMA * self.plate_emissivity * (ambient + KELVIN) ** 3
        return (self.film_coefficient + h_rad) * self.exposed_area()

    def lateral_conductance(self):
        return self.board_conductivity * self.pixel_size * self.board_thickness / self.pitch


def pixel_name(row, col):
    """Card label of a pixel: row letter then 1-based column, e.g. (0, 2) -> 'A3'."""
    return f"{chr(ord('A') + row)}{col + 1}"


def parse_pixel_name(name):
    name = name.strip().upper()
    if len(name) < 2 or not name[0].isalpha() or not name[1:].isdigit():
        raise ValueError(f"not a pixel label: {name!r}")
    return ord(name[0]) - ord("A"), int(name[1:]) - 1


@dataclass(frozen=True)
class HeatSource:
    """A radiating patch on the measured board.

    Exactly one of ``temperature`` (prescribed surface temperature) or
    ``power`` (drive power into a lumped body with ``resistance`` to
    ambient and heat capacity ``capacitance``) is set.
    """

    patch: Patch
    temperature: Optional[float] = None
    power: Optional[float] = None
    resistance: float = 50.0
    capacitance: float = 2.0

    @classmethod
    def prescribed(cls, patch, temperature):
        return cls(patch=patch, temperature=temperature)

    @classmethod
    def driven(cls, patch, power, resistance=50.0, capacitance=2.0):
        return cls(patch=patch, power=power, resistance=resistance, capacitance=capacitance)

    @property
    def is_driven(self):
        return self.power is not None

    def validate(self, ambient):
        if (self.temperature is None) == (self.power is None):
            raise PreconditionError("a heat source needs exactly one of temperature or power")
        if self.is_driven:
            if self.power < 0:
                raise PreconditionError(f"source power must be >= 0, got {self.power}")
            if not (self.resistance > 0 and self.capacitance > 0):
                raise PreconditionError("driven source needs positive resistance and capacitance")
        elif self.temperature < ambient - 50.0:
            raise PreconditionError(
                f"prescribed temperature {self.temperature} is more than 50 C below ambient")

    def with_strength(self, value):
        """Copy with the temperature (prescribed) or power (driven) replaced."""
        if self.is_driven:
            return replace(self, power=value)
        return replace(self, temperature=value)

    @property
    def strength(self):
        return self.power if self.is_driven else self.temperature


@dataclass
class Node:
    capacitance: float
    temperature: float
    label: str


class Edge(NamedTuple):
    i: int
    j: Optional[int]  # None means ambient
    conductance: float
    kind: str = ""


@dataclass
class ThermalNetwork:
    nodes: list
    edges: list
    power_inputs: list = field(default_factory=list)
    ambient: float = 21.0
    card: Optional[CardSpec] = None
    plate_nodes: dict = field(default_factory=dict)
    die_nodes: dict = field(default_factory=dict)
    source_nodes: dict = field(default_factory=dict)
    quadrature_order: int = DEFAULT_ORDER
    _view_cache: dict = field(default_factory=dict, repr=False)

    @property
    def temperatures(self):
        return np.array([n.temperature for n in self.nodes])

    def set_temperatures(self, values):
        for node, value in zip(self.nodes, values):
            node.temperature = float(value)

    def reset(self, temperature=None):
        t = self.ambient if temperature is None else temperature
        for node in self.nodes:
            node.temperature = t

    def labels(self):
        return [n.label for n in self.nodes]

    def index(self, label):
        for k, node in enumerate(self.nodes):
            if node.label == label:
                return k
        raise KeyError(label)

    def count_edges(self, kind):
        return sum(1 for e in self.edges if e.kind == kind)

    def copy(self):
        """Independent clone for parallel sweeps (view factors are shared)."""
        clone = ThermalNetwork(
            nodes=[Node(n.capacitance, n.temperature, n.label) for n in self.nodes],
            edges=list(self.edges),
            power_inputs=list(self.power_inputs),
            ambient=self.ambient,
            card=self.card,
            plate_nodes=dict(self.plate_nodes),
            die_nodes=dict(self.die_nodes),
            source_nodes=dict(self.source_nodes),
            quadrature_order=self.quadrature_order,
        )
        clone._view_cache = self._view_cache
        return clone

    def validate(self):
        n = len(self.nodes)
        adjacency = [[] for _ in range(n)]
        grounded = set()
        for e in self.edges:
            if not 0 <= e.i < n or (e.j is not None and not 0 <= e.j < n):
                raise NetworkError(f"edge {e} references a node outside 0..{n - 1}")
            if e.conductance < 0:
                raise NetworkError(f"edge {e} has negative conductance")
            if e.conductance == 0:
                continue
            if e.j is None:
                grounded.add(e.i)
            else:
                adjacency[e.i].append(e.j)
                adjacency[e.j].append(e.i)
        for k, _ in self.power_inputs:
            if not 0 <= k < n:
                raise NetworkError(f"power input on missing node {k}")
        seen = set(grounded)
        queue = deque(grounded)
        while queue:
            k = queue.popleft()
            for m in adjacency[k]:
                if m not in seen:
                    seen.add(m)
                    queue.append(m)
        floating = [self.nodes[k].label for k in range(n) if k not in seen]
        if floating:
            raise NetworkError(f"nodes without a conductive path to ambient: {', '.join(floating)}")

    # -- assembly -------------------------------------------------------

    def add_node(self, capacitance, temperature, label):
        self.nodes.append(Node(capacitance, temperature, label))
        return len(self.nodes) - 1

    def attach_sources(self, sources):
        """Register a lumped node for every power-driven source.

        Returns the node index of each source (None for prescribed ones).
        Sources are keyed by value, so identical driven sources share a node.
        """
        out = []
        for src in sources:
            src.validate(self.ambient)
            if not src.is_driven:
                out.append(None)
                continue
            if src not in self.source_nodes:
                k = self.add_node(src.capacitance, self.ambient, f"source{len(self.source_nodes)}")
                self.edges.append(Edge(k, None, 1.0 / src.resistance, "source"))
                self.power_inputs.append((k, src.power))
                self.source_nodes[src] = k
            out.append(self.source_nodes[src])
        return out

    def coupling(self, source):
        """Per-plate radiative coefficients sigma*A*F*eps_s*eps_p (W/K^4).

        Returns ``(plate_indices, coefficients)``.
        """
        if self.card is None:
            raise NetworkError("radiative coupling needs a card geometry")
        key = (source.patch, self.quadrature_order)
        cached = self._view_cache.get(key)
        if cached is None:
            gap = source.patch.plane_gap
            coeffs = []
            for (r, c) in self.card.pixels():
                target = self.card.pixel_patch(r, c, gap)
                f = view_factor(source.patch, target, self.quadrature_order)
                coeffs.append(SIGMA * source.patch.area * f
                              * source.patch.emissivity * target.emissivity)
            cached = np.array(coeffs)
            self._view_cache[key] = cached
        idx = np.array([self.plate_nodes[p] for p in self.card.pixels()], dtype=int)
        return idx, cached

    def _assemble(self):
        n = len(self.nodes)
        cap = np.array([node.capacitance for node in self.nodes], dtype=float)
        lap = np.zeros((n, n))
        g_amb = np.zeros(n)
        for e in self.edges:
            if e.j is None:
                lap[e.i, e.i] += e.conductance
                g_amb[e.i] += e.conductance
            else:
                lap[e.i, e.i] += e.conductance
                lap[e.j, e.j] += e.conductance
                lap[e.i, e.j] -= e.conductance
                lap[e.j, e.i] -= e.conductance
        power = np.zeros(n)
        for k, watts in self.power_inputs:
            power[k] += watts
        return cap, lap, g_amb, power


def build_network(card, ambient=21.0, quadrature_order=DEFAULT_ORDER):
    """Two-node-per-pixel RC network of ``card`` at uniform ``ambient``."""
    card.validate()
    net = ThermalNetwork(nodes=[], edges=[], ambient=ambient, card=card,
                         quadrature_order=quadrature_order)
    c_plate = card.plate_capacitance()
    g_attach = 1.0 / card.attach_resistance
    g_amb = card.ambient_conductance(ambient)
    for (r, c) in card.pixels():
        name = pixel_name(r, c)
        p = net.add_node(c_plate, ambient, f"{name}.plate")
        d = net.add_node(card.die_capacitance, ambient, f"{name}.die")
        net.plate_nodes[(r, c)] = p
        net.die_nodes[(r, c)] = d
        net.edges.append(Edge(p, d, g_attach, "attach"))
        net.edges.append(Edge(p, None, g_amb, "ambient"))
    g_lat = card.lateral_conductance()
    for (r, c) in card.pixels():
        if c + 1 < card.cols:
            net.edges.append(Edge(net.plate_nodes[(r, c)], net.plate_nodes[(r, c + 1)], g_lat, "lateral"))
        if r + 1 < card.rows:
            net.edges.append(Edge(net.plate_nodes[(r, c)], net.plate_nodes[(r + 1, c)], g_lat, "lateral"))
    net.validate()
    return net


# -- radiative injection ------------------------------------------------

class _Radiation:
    """Radiative power terms for a fixed set of sources on a network."""

    def __init__(self, net, sources, linearize=False):
        source_idx = net.attach_sources(sources)
        self.terms = []
        for src, k in zip(sources, source_idx):
            plates, coeffs = net.coupling(src)
            self.terms.append((src, k, plates, coeffs))
        self.t_lin = net.ambient + KELVIN
        self.linearize = linearize

    def power(self, theta, ambient):
        """Injected power per node given rises ``theta`` over ambient."""
        q = np.zeros_like(theta)
        for src, k, plates, coeffs in self.terms:
            ts = (ambient + theta[k]) if k is not None else src.temperature
            tp = ambient + theta[plates]
            if self.linearize:
                flow = 4.0 * coeffs * self.t_lin ** 3 * (ts - tp)
            else:
                flow = coeffs * ((ts + KELVIN) ** 4 - (tp + KELVIN) ** 4)
            q[plates] += flow
            if k is not None:
                q[k] -= flow.sum()
        return q

    def jacobian(self, theta, ambient):
        n = theta.size
        jac = np.zeros((n, n))
        for src, k, plates, coeffs in self.terms:
            tp = ambient + theta[plates] + KELVIN
            if self.linearize:
                dp = -4.0 * coeffs * self.t_lin ** 3 * np.ones_like(tp)
            else:
                dp = -4.0 * coeffs * tp ** 3
            jac[plates, plates] += dp
            if k is not None:
                jac[k, plates] -= dp
                ts = ambient + theta[k] + KELVIN
                ds = (4.0 * coeffs * self.t_lin ** 3 if self.linearize
                      else 4.0 * coeffs * ts ** 3)
                jac[plates, k] += ds
                jac[k, k] -= ds.sum()
        return jac


class _Stepper:
    """Factorised implicit-Euler system for a fixed network and time step."""

    def __init__(self, net, sources, dt, linearize=False):
        if not dt > 0:
            raise PreconditionError(f"time step must be positive, got {dt}")
        self.rad = _Radiation(net, sources, linearize)
        cap, lap, _, power = net._assemble()
        bad = [net.nodes[k].label for k in np.flatnonzero(~(cap > 0))]
        if bad:
            raise NumericalError(f"non-positive heat capacity at node(s): {', '.join(bad)}")
        self.net = net
        self.c_dt = cap / dt
        self.power = power
        try:
            self.lu = lu_factor(np.diag(self.c_dt) + lap, check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise NumericalError(f"implicit system could not be factorised: {exc}") from exc

    def advance(self, theta):
        rhs = self.c_dt * theta + self.power + self.rad.power(theta, self.net.ambient)
        return lu_solve(self.lu, rhs)


def step_transient(net, sources, dt, linearize=False):
    """Advance ``net`` by one implicit-Euler step of ``dt`` seconds.

    Source radiation is evaluated at the start-of-step temperatures.
    Updates the network in place and returns the new temperatures.
    """
    stepper = _Stepper(net, sources, dt, linearize)
    theta = stepper.advance(net.temperatures - net.ambient)
    temps = net.ambient + theta
    net.set_temperatures(temps)
    return temps


@dataclass
class TransientResult:
    times: np.ndarray
    temperatures: np.ndarray  # (samples, nodes)
    labels: list

    def series(self, label):
        return self.temperatures[:, self.labels.index(label)]

    def final(self):
        return self.temperatures[-1]


def _step_count(span, dt, what):
    n = span / dt
    k = round(n)
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, n):
        raise PreconditionError(f"{what} ({span} s) must be a positive multiple of dt ({dt} s)")
    return k


def run_transient(net, sources, t_end, dt=0.1, record_every=1.0, linearize=False):
    """Integrate from the network's current state to ``t_end`` seconds.

    Samples are taken at t=0, every ``record_every`` seconds and at
    ``t_end``.  The network is left in its final state.
    """
    if not (dt > 0 and t_end >= dt):
        raise PreconditionError(f"need t_end >= dt > 0, got t_end={t_end}, dt={dt}")
    n_steps = _step_count(t_end, dt, "t_end")
    every = _step_count(record_every, dt, "record_every")
    stepper = _Stepper(net, sources, dt, linearize)
    theta = net.temperatures - net.ambient
    times = [0.0]
    rows = [theta.copy()]
    for step in range(1, n_steps + 1):
        theta = stepper.advance(theta)
        if step % every == 0 or step == n_steps:
            times.append(step * dt)
            rows.append(theta.copy())
    net.set_temperatures(net.ambient + theta)
    return TransientResult(np.array(times), net.ambient + np.array(rows), net.labels())


def solve_steady(net, sources, tol=1e-9, max_iter=100, linearize=False):
    """Steady operating point by damped Newton iteration from ambient.

    Converges when the largest nodal power imbalance is below ``tol`` W.
    Returns node temperatures; the network state is not modified.
    """
    rad = _Radiation(net, sources, linearize)
    _, lap, _, power = net._assemble()
    ambient = net.ambient
    theta = np.zeros(len(net.nodes))

    def residual(th):
        return power + rad.power(th, ambient) - lap @ th

    res = residual(theta)
    norm = np.max(np.abs(res)) if res.size else 0.0
    for _ in range(max_iter):
        if norm < tol:
            break
        jac = rad.jacobian(theta, ambient) - lap
        try:
            delta = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular steady-state Jacobian: {exc}") from exc
        alpha = 1.0
        while True:
            trial = theta + alpha * delta
            trial_res = residual(trial)
            trial_norm = np.max(np.abs(trial_res))
            if trial_norm < norm or alpha < 1e-4:
                break
            alpha *= 0.5
        theta, res, norm = trial, trial_res, trial_norm
    if norm >= tol:
        raise SolverError(f"steady solve did not converge; residual {norm:.3e} W", norm)
    # one extra Newton step tightens the energy balance to round-off
    if res.size:
        jac = rad.jacobian(theta, ambient) - lap
        polished = theta + np.linalg.solve(jac, -res)
        if np.max(np.abs(residual(polished))) <= norm:
            theta = polished
    return ambient + theta


def power_balance(net, sources, temperatures):
    """(radiative + static input, loss to ambient) in watts at ``temperatures``."""
    rad = _Radiation(net, sources)
    _, _, g_amb, power = net._assemble()
    theta = np.asarray(temperatures) - net.ambient
    q = rad.power(theta, net.ambient)
    injected = power.sum() + q.sum()
    lost = float(g_amb @ theta)
    return float(injected), lost


def time_constant_bound(net):
    """Slowest decay time (s) of the un-driven network, from its eigenvalues."""
    cap, lap, _, _ = net._assemble()
    scale = 1.0 / np.sqrt(cap)
    sym = lap * scale[:, None] * scale[None, :]
    rates = np.linalg.eigvalsh(sym)
    return float(1.0 / rates.min())


def plate_map(net, temperatures):
    """Grid (rows x cols) of plate temperatures."""
    card = net.card
    grid = np.empty((card.rows, card.cols))
    for (r, c), k in net.plate_nodes.items():
        grid[r, c] = temperatures[k]
    return grid


def die_map(net, temperatures):
    card = net.card
    grid = np.empty((card.rows, card.cols))
    for (r, c), k in net.die_nodes.items():
        grid[r, c] = temperatures[k]
    return grid
