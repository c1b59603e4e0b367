"""Uniform lattices over (x, y, t) or (x, y), lattice functions and their norms.

Array layout: a field over a d-dimensional problem has ``2d`` or ``2d + 1`` axes ordered
``(x_1..x_d, y_1..y_d[, t])``.  Node ``j`` on an axis of half-length ``L`` and ``N`` points
sits at ``-L + j * 2L / N``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

AXIS_GROUPS = ("x", "y", "t")


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Rectangular lattice ``[-Lx, Lx)^d x [-Ly, Ly)^d x [-Lt, Lt)``.

    ``Lt``/``Nt`` are ``None`` for a stationary (x, y) lattice.  ``periodic`` holds one flag
    per axis group (x, y, t); the t flag only affects how t-derivatives are taken.
    """

    d: int
    Lx: float
    Ly: float
    Nx: int
    Ny: int
    Lt: float | None = None
    Nt: int | None = None
    periodic: tuple = (True, True, False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if (self.Lt is None) != (self.Nt is None):
            raise ValueError("Lt and Nt must be given together")
        for name in ("Nx", "Ny", "Nt"):
            n = getattr(self, name)
            if n is None:
                continue
            if n < 8 or not _is_pow2(n):
                raise ValueError(f"{name} must be a power of two >= 8, got {n}")
        for name in ("Lx", "Ly", "Lt"):
            v = getattr(self, name)
            if v is not None and not (v > 0 and np.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v}")
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        if len(self.periodic) != 3:
            raise ValueError("periodic needs one flag per axis group (x, y, t)")

    # -- shape bookkeeping -------------------------------------------------
    @property
    def has_time(self) -> bool:
        return self.Nt is not None

    @property
    def groups(self) -> tuple:
        return AXIS_GROUPS if self.has_time else AXIS_GROUPS[:2]

    @property
    def shape(self) -> tuple:
        s = (self.Nx,) * self.d + (self.Ny,) * self.d
        return s + ((self.Nt,) if self.has_time else ())

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axes(self, group: str) -> tuple:
        d = self.d
        if group == "x":
            return tuple(range(d))
        if group == "y":
            return tuple(range(d, 2 * d))
        if group == "t":
            if not self.has_time:
                raise ValueError("grid has no t axis")
            return (2 * d,)
        raise ValueError(f"unknown axis group {group!r}")

    def _LN(self, group):
        return {"x": (self.Lx, self.Nx), "y": (self.Ly, self.Ny), "t": (self.Lt, self.Nt)}[group]

    def spacing(self, group: str) -> float:
        L, N = self._LN(group)
        if N is None:
            raise ValueError("grid has no t axis")
        return 2.0 * L / N

    @property
    def dx(self):
        return self.spacing("x")

    @property
    def dy(self):
        return self.spacing("y")

    @property
    def dt(self):
        return self.spacing("t")

    @property
    def cell_volume(self) -> float:
        v = (self.dx * self.dy) ** self.d
        return v * self.dt if self.has_time else v

    def nodes(self, group: str) -> np.ndarray:
        L, N = self._LN(group)
        if N is None:
            raise ValueError("grid has no t axis")
        return -L + np.arange(N) * (2.0 * L / N)

    def frequencies(self, group: str) -> np.ndarray:
        """Angular frequencies ``2 pi k / (2L)`` in FFT order."""
        L, N = self._LN(group)
        return 2.0 * np.pi * sfft.fftfreq(N, d=2.0 * L / N)

    def broadcast(self, group: str, component: int = 0, values=None) -> np.ndarray:
        """1-d array along one axis, reshaped to broadcast against the full lattice."""
        ax = self.axes(group)[component]
        v = self.nodes(group) if values is None else values
        shape = [1] * self.ndim
        shape[ax] = v.size
        return v.reshape(shape)

    # -- derived grids -----------------------------------------------------
    def spatial(self) -> "Grid":
        return Grid(self.d, self.Lx, self.Ly, self.Nx, self.Ny, periodic=self.periodic)

    def with_time(self, Lt: float, Nt: int) -> "Grid":
        return Grid(self.d, self.Lx, self.Ly, self.Nx, self.Ny, Lt, Nt, self.periodic)

    def dilated(self, lam: float) -> "Grid":
        """Paired grid whose nodes are the dilates ``(lam^3 x, lam y, lam^2 t)`` of ours."""
        if lam <= 0:
            raise ValueError("dilation factor must be positive")
        Lt = None if self.Lt is None else lam**2 * self.Lt
        return Grid(self.d, lam**3 * self.Lx, lam * self.Ly, self.Nx, self.Ny, Lt, self.Nt, self.periodic)

    def refined(self, factor: int = 2) -> "Grid":
        Nt = None if self.Nt is None else self.Nt * factor
        return Grid(self.d, self.Lx, self.Ly, self.Nx * factor, self.Ny * factor, self.Lt, Nt, self.periodic)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["periodic"] = list(self.periodic)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        d = dict(d)
        d["periodic"] = tuple(d.get("periodic", (True, True, False)))
        return cls(**d)


@dataclass(frozen=True)
class Field:
    """Lattice function on a :class:`Grid`; values are copied and made read-only."""

    grid: Grid
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, copy=True)
        if not (np.issubdtype(v.dtype, np.floating) or np.issubdtype(v.dtype, np.complexfloating)):
            v = v.astype(float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values have shape {v.shape}, grid expects {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, f) -> "Field":
        """Sample ``f(x, y[, t])``; x and y arrive as broadcastable arrays of shape ``(..., d)``."""
        x, y = lattice_coords(grid)
        args = (x, y, grid.broadcast("t")) if grid.has_time else (x, y)
        return cls(grid, np.broadcast_to(f(*args), grid.shape))

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    def __add__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return Field(self.grid, self.values - other.values)

    def scaled(self, c) -> "Field":
        return Field(self.grid, c * self.values)


def lattice_coords(grid: Grid):
    """Node coordinates as arrays of shape ``(broadcast shape..., d)`` for x and y."""
    def stack(group):
        comps = np.broadcast_arrays(*[grid.broadcast(group, i) for i in range(grid.d)])
        return np.stack(comps, axis=-1)

    return stack("x"), stack("y")


def _same_grid(a: Field, b: Field):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


@dataclass(frozen=True)
class NormSpec:
    """``L^q`` over the ``outer`` axis groups of the ``L^p`` norm over the ``inner`` ones."""

    p: float
    q: float
    inner: tuple = ("x", "t")
    outer: tuple = ("y",)

    def __post_init__(self):
        if not (self.p >= 1 and self.q >= 1):
            raise ValueError("p and q must be >= 1")
        if set(self.inner) & set(self.outer):
            raise ValueError("inner and outer axis groups overlap")
        for g in tuple(self.inner) + tuple(self.outer):
            if g not in AXIS_GROUPS:
                raise ValueError(f"unknown axis group {g!r}")

    @classmethod
    def stationary(cls, p, q) -> "NormSpec":
        return cls(p, q, inner=("x",), outer=("y",))


def _values(f):
    return f.values if isinstance(f, Field) else np.asarray(f)


def _power_sum(a: np.ndarray, p: float, axis=None, weight: float = 1.0):
    """``(weight * sum |a|^p)^(1/p)`` or the max for p = inf.  numpy sums pairwise."""
    a = np.abs(a)
    if np.isinf(p):
        return np.max(a, axis=axis)
    return (weight * np.sum(a**p, axis=axis)) ** (1.0 / p)


def lp_norm(field: Field, p: float) -> float:
    """Riemann-sum ``L^p`` norm with cell-volume weights."""
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return float(_power_sum(field.values, p, weight=field.grid.cell_volume))


def mixed_norm(field: Field, spec: NormSpec) -> float:
    """Inner ``L^p`` over ``spec.inner`` at every node of ``spec.outer``, then ``L^q`` outside."""
    g = field.grid
    if set(spec.inner) | set(spec.outer) != set(g.groups):
        raise ValueError(f"norm layout {spec.inner}/{spec.outer} does not match field axes {g.groups}")
    inner_axes = sum((g.axes(k) for k in spec.inner), ())
    w_in = np.prod([g.spacing(k) ** len(g.axes(k)) for k in spec.inner])
    w_out = np.prod([g.spacing(k) ** len(g.axes(k)) for k in spec.outer])
    inner = _power_sum(field.values, spec.p, axis=inner_axes, weight=w_in)
    return float(_power_sum(inner, spec.q, weight=w_out))


def weak_l1(field: Field, levels: int | None = None) -> float:
    """``sup_lam lam * |{|f| > lam}|``.

    With ``levels=None`` the supremum is exact: sorting ``|f|`` in decreasing order, it is
    attained as ``lam`` increases to one of the values and equals ``max_k |f|_(k) k cellvol``.
    With an integer, the sup runs over ``levels`` dyadic thresholds ``max|f| 2^-j`` (j >= 1),
    stopping once below the smallest nonzero value; this is within a factor 2 of the exact value.
    """
    a = np.abs(_values(field)).ravel()
    a = a[a > 0]
    if a.size == 0:
        return 0.0
    cv = field.grid.cell_volume
    if levels is None:
        a = np.sort(a)[::-1]
        return float(np.max(a * np.arange(1, a.size + 1)) * cv)
    top, bottom = a.max(), a.min()
    lam = top * 2.0 ** -np.arange(1, levels + 1)
    lam = lam[lam >= bottom / 2]
    s = np.sort(a)
    counts = s.size - np.searchsorted(s, lam, side="right")
    return float(np.max(lam * counts) * cv) if lam.size else 0.0


# -- lattice transforms ----------------------------------------------------

def _transform_axes(grid: Grid, groups) -> tuple:
    return sum((grid.axes(g) for g in groups), ())


def _phase(grid: Grid, groups, sign: int) -> np.ndarray:
    """``exp(sign * i L k)`` factors accounting for the lattice starting at ``-L``."""
    ph = 1.0
    for g in groups:
        L, _ = grid._LN(g)
        k = grid.frequencies(g)
        for c in range(len(grid.axes(g))):
            ph = ph * grid.broadcast(g, c, np.exp(sign * 1j * L * k))
    return ph


def forward_transform(field: Field, groups=("x",)) -> np.ndarray:
    """Continuum-normalised transform ``int f e^{-i k.x}`` over the given axis groups."""
    g = field.grid
    axes = _transform_axes(g, groups)
    w = np.prod([g.spacing(k) ** len(g.axes(k)) for k in groups])
    return sfft.fftn(field.values, axes=axes) * (w * _phase(g, groups, +1))


def inverse_transform(values: np.ndarray, grid: Grid, groups=("x",), real: bool = True):
    """Inverse of :func:`forward_transform` (includes the ``(2 pi)^{-n}`` factor)."""
    axes = _transform_axes(grid, groups)
    w = np.prod([grid.spacing(k) ** len(grid.axes(k)) for k in groups])
    out = sfft.ifftn(values * _phase(grid, groups, -1), axes=axes) / w
    return out.real if real else out


# -- binary + JSON export ----------------------------------------------------

FORMAT_TAG = "kolmo-field-v1"


def save_field(field: Field, stem, meta: dict | None = None) -> tuple[Path, Path]:
    """Write ``stem.bin`` (little-endian float64, first x axis fastest) and ``stem.json``."""
    if np.iscomplexobj(field.values):
        raise ValueError("only real fields can be exported")
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    bin_path, json_path = stem.with_suffix(".bin"), stem.with_suffix(".json")
    data = np.asarray(field.values, dtype="<f8").ravel(order="F")
    bin_path.write_bytes(data.tobytes())
    side = {
        "format": FORMAT_TAG,
        "dtype": "<f8",
        "axis_order": _axis_names(field.grid),
        "fastest_axis": "first",
        "shape": list(field.grid.shape),
        "grid": field.grid.to_dict(),
        "data_file": bin_path.name,
    }
    if meta:
        side["meta"] = meta
    json_path.write_text(json.dumps(side, indent=2, sort_keys=True), encoding="utf-8")
    return bin_path, json_path


def load_field(stem) -> Field:
    stem = Path(stem)
    side = json.loads(stem.with_suffix(".json").read_text(encoding="utf-8"))
    if side.get("format") != FORMAT_TAG:
        raise ValueError("not a field sidecar")
    grid = Grid.from_dict(side["grid"])
    raw = np.frombuffer((stem.parent / side["data_file"]).read_bytes(), dtype="<f8")
    if raw.size != grid.size:
        raise ValueError(f"binary holds {raw.size} values, grid expects {grid.size}")
    return Field(grid, raw.reshape(grid.shape, order="F").astype(float))


def _axis_names(grid: Grid) -> list:
    names = [f"x{i + 1}" for i in range(grid.d)] + [f"y{i + 1}" for i in range(grid.d)]
    return names + (["t"] if grid.has_time else [])
