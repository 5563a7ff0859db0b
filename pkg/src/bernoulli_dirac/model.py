"""Lattice, disorder and finite-volume operators for the 1D Dirac model.

Spinor amplitudes are stored interleaved: site ``n`` of a window starting at
``n_min`` occupies indices ``2(n - n_min)`` (upper component) and
``2(n - n_min) + 1`` (lower component). In that ordering the Dirac operator
is a real symmetric tridiagonal matrix, and the nonrelativistic operator
built from the square of the hopping part has bandwidth two.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DiracParams",
    "PotentialSpec",
    "LatticeWindow",
    "Realization",
    "OperatorMatrix",
    "SpinorState",
    "BoundaryOperator",
    "site_uniforms",
    "sample_realization",
    "build_dirac",
    "build_schrodinger_limit",
    "schrodinger_matrix",
    "apply_operator",
    "boundary_operator",
    "position_weights",
    "delta_state",
    "index_of",
]

# Sites are shifted by this offset before being used as Philox counters so
# that negative site indices map to distinct nonnegative counters.
_SITE_OFFSET = 1 << 62


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DiracParams:
    """Mass ``m`` and light speed ``c`` of the Dirac operator."""

    m: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        if not (self.m >= 0.0):
            raise ValueError(f"mass must be >= 0, got {self.m}")
        if not (self.c > 0.0):
            raise ValueError(f"light speed must be > 0, got {self.c}")

    @property
    def free_bound(self) -> float:
        """Norm of the free operator, ``c * sqrt(4 + m^2 c^2)``."""
        return self.c * math.sqrt(4.0 + (self.m * self.c) ** 2)


@dataclass(frozen=True)
class PotentialSpec:
    """Law of the site potential.

    ``kind`` is ``"bernoulli"`` (values ``+V`` with probability ``p``,
    ``-V`` otherwise), ``"constant"`` (every site equals ``value``) or
    ``"explicit"`` (``values`` listed left to right over the window).
    Build instances through :meth:`bernoulli`, :meth:`constant` and
    :meth:`explicit`.
    """

    V: float
    p: float = 0.5
    kind: str = "bernoulli"
    value: Optional[float] = None
    values: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("bernoulli", "constant", "explicit"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "bernoulli":
            if not (self.V > 0.0):
                raise ValueError(f"Bernoulli amplitude must be > 0, got {self.V}")
            # p in {0, 1} is allowed as a degenerate law
            if not (0.0 <= self.p <= 1.0):
                raise ValueError(f"probability must lie in [0, 1], got {self.p}")
        if self.kind == "constant" and self.value is None:
            raise ValueError("constant potential needs a value")
        if self.kind == "explicit" and self.values is None:
            raise ValueError("explicit potential needs a list of values")

    @classmethod
    def bernoulli(cls, V: float, p: float = 0.5) -> "PotentialSpec":
        return cls(V=float(V), p=float(p), kind="bernoulli")

    @classmethod
    def constant(cls, value: float) -> "PotentialSpec":
        return cls(V=abs(float(value)), p=1.0, kind="constant", value=float(value))

    @classmethod
    def explicit(cls, values: Sequence[float]) -> "PotentialSpec":
        vals = tuple(float(v) for v in values)
        amp = max((abs(v) for v in vals), default=0.0)
        return cls(V=amp, p=1.0, kind="explicit", values=vals)

    @property
    def sup(self) -> float:
        """Supremum of ``|V_n|`` over all realizations."""
        if self.kind == "bernoulli":
            return self.V
        if self.kind == "constant":
            return abs(self.value)
        return max((abs(v) for v in self.values), default=0.0)


@dataclass(frozen=True)
class LatticeWindow:
    """Finite set of consecutive sites ``n_min..n_max`` (inclusive)."""

    n_min: int
    n_max: int

    def __post_init__(self):
        if self.n_min > self.n_max:
            raise ValueError(f"empty window [{self.n_min}, {self.n_max}]")

    @classmethod
    def centered(cls, L: float, n: int = 0) -> "LatticeWindow":
        """Box of sites ``k`` with ``|k - n| <= L/2``."""
        half = int(math.floor(L / 2.0))
        return cls(n - half, n + half)

    @property
    def size(self) -> int:
        return self.n_max - self.n_min + 1

    @property
    def dim(self) -> int:
        return 2 * self.size

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.n_min, self.n_max + 1)

    def __contains__(self, n) -> bool:
        return self.n_min <= n <= self.n_max

    def contains_window(self, other: "LatticeWindow") -> bool:
        return self.n_min <= other.n_min and other.n_max <= self.n_max


def index_of(window: LatticeWindow, n: int, component: str) -> int:
    """Interleaved vector index of site ``n``, component ``'+'`` or ``'-'``."""
    if n not in window:
        raise IndexError(f"site {n} outside window [{window.n_min}, {window.n_max}]")
    base = 2 * (n - window.n_min)
    if component == "+":
        return base
    if component == "-":
        return base + 1
    raise ValueError(f"component must be '+' or '-', got {component!r}")


@dataclass(frozen=True, eq=False)
class Realization:
    """One sampled potential sequence ``V_n`` on a window."""

    window: LatticeWindow
    values: np.ndarray
    seed_record: tuple = ()
    spec: Optional[PotentialSpec] = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.window.size,):
            raise ValueError(
                f"expected {self.window.size} site values, got shape {vals.shape}"
            )
        object.__setattr__(self, "values", _readonly(vals))
        object.__setattr__(self, "seed_record", tuple(int(s) for s in self.seed_record))

    def value_at(self, n: int) -> float:
        if n not in self.window:
            raise IndexError(f"site {n} outside realization window")
        return float(self.values[n - self.window.n_min])

    def restrict(self, window: LatticeWindow) -> "Realization":
        if not self.window.contains_window(window):
            raise ValueError("restriction window must lie inside the realization window")
        lo = window.n_min - self.window.n_min
        return Realization(window, self.values[lo:lo + window.size].copy(),
                           self.seed_record, self.spec)

    def shifted(self, s: float) -> "Realization":
        """Same realization with every site value shifted by ``s``."""
        return Realization(self.window, self.values + s, self.seed_record, None)

    def __eq__(self, other):
        if not isinstance(other, Realization):
            return NotImplemented
        return (self.window == other.window and self.seed_record == other.seed_record
                and np.array_equal(self.values, other.values))

    __hash__ = None


def site_uniforms(seed: int, realization: int, sites: np.ndarray) -> np.ndarray:
    """Uniform ``[0, 1)`` numbers attached to lattice sites.

    The number at site ``n`` is the output of a Philox-4x64 counter RNG keyed
    by ``(seed, realization)`` at counter ``(n + 2**62) // 4``, lane
    ``(n + 2**62) % 4``. It therefore depends only on ``(seed, realization, n)``
    and not on the window it is requested for.
    """
    sites = np.asarray(sites, dtype=np.int64)
    if sites.size == 0:
        return np.empty(0)
    lo, hi = int(sites.min()), int(sites.max())
    first_block = (lo + _SITE_OFFSET) // 4
    last_block = (hi + _SITE_OFFSET) // 4
    nblocks = last_block - first_block + 1
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, realization & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    counter = np.array([first_block, 0, 0, 0], dtype=np.uint64)
    raw = np.random.Philox(key=key, counter=counter).random_raw(4 * nblocks)
    offs = (sites - lo) + ((lo + _SITE_OFFSET) % 4)
    return (raw[offs] >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def sample_realization(spec: PotentialSpec, window: LatticeWindow, seed: int,
                       realization: int = 0) -> Realization:
    """Draw the potential on ``window`` for realization ``realization`` of ``seed``."""
    if spec.kind == "explicit":
        if len(spec.values) != window.size:
            raise ValueError(
                f"explicit potential has {len(spec.values)} values, window has {window.size} sites"
            )
        vals = np.array(spec.values, dtype=float)
    elif spec.kind == "constant":
        vals = np.full(window.size, spec.value, dtype=float)
    else:
        u = site_uniforms(seed, realization, window.sites)
        vals = np.where(u < spec.p, spec.V, -spec.V)
    return Realization(window, vals, (seed, realization), spec)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Real symmetric banded matrix over the interleaved spinor basis.

    ``diagonals[k]`` holds the ``k``-th superdiagonal (length ``dim - k``);
    the subdiagonals are implied by symmetry.
    """

    window: LatticeWindow
    diagonals: tuple
    params: Optional[DiracParams] = None
    realization: Optional[Realization] = None
    kind: str = "dirac"

    def __post_init__(self):
        diags = tuple(_readonly(np.array(d, dtype=float)) for d in self.diagonals)
        for k, d in enumerate(diags):
            if d.shape != (max(self.window.dim - k, 0),):
                raise ValueError(f"diagonal {k} has wrong length {d.shape}")
        object.__setattr__(self, "diagonals", diags)

    @property
    def dim(self) -> int:
        return self.window.dim

    @property
    def bandwidth(self) -> int:
        return len(self.diagonals) - 1

    def dense(self) -> np.ndarray:
        a = np.diag(self.diagonals[0])
        for k in range(1, len(self.diagonals)):
            if self.diagonals[k].size:
                a += np.diag(self.diagonals[k], k) + np.diag(self.diagonals[k], -k)
        return a

    def sparse(self) -> sp.csr_matrix:
        offs, data = [0], [self.diagonals[0]]
        for k in range(1, len(self.diagonals)):
            offs += [k, -k]
            data += [self.diagonals[k], self.diagonals[k]]
        return sp.diags(data, offs, shape=(self.dim, self.dim), format="csr")

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Product with a vector (or with the columns of a 2D array)."""
        d0 = self.diagonals[0]
        if x.ndim == 1:
            y = d0 * x
            for k in range(1, len(self.diagonals)):
                dk = self.diagonals[k]
                y[:-k] += dk * x[k:]
                y[k:] += dk * x[:-k]
            return y
        y = d0[:, None] * x
        for k in range(1, len(self.diagonals)):
            dk = self.diagonals[k][:, None]
            y[:-k] += dk * x[k:]
            y[k:] += dk * x[:-k]
        return y

    def banded(self, shift: complex = 0.0) -> np.ndarray:
        """``(self - shift)`` in the ``(l, u)`` layout of ``scipy.linalg.solve_banded``."""
        bw = self.bandwidth
        dtype = complex if np.iscomplexobj(shift) else float
        ab = np.zeros((2 * bw + 1, self.dim), dtype=dtype)
        ab[bw] = self.diagonals[0] - shift
        for k in range(1, bw + 1):
            ab[bw - k, k:] = self.diagonals[k]
            ab[bw + k, :-k] = self.diagonals[k]
        return ab

    def upper_band(self) -> np.ndarray:
        """Upper band storage for ``scipy.linalg.eig_banded``."""
        bw = self.bandwidth
        a = np.zeros((bw + 1, self.dim))
        for k in range(bw + 1):
            a[bw - k, k:] = self.diagonals[k]
        return a

    def norm_bound(self) -> float:
        """Rigorous upper bound on the operator norm.

        For Dirac operators this is ``c sqrt(4 + m^2 c^2) + max |V_n|``;
        otherwise the Gershgorin row-sum bound.
        """
        if self.kind == "dirac" and self.params is not None and self.realization is not None:
            vmax = float(np.max(np.abs(self.realization.values))) if self.window.size else 0.0
            return self.params.free_bound + vmax
        rows = np.abs(self.diagonals[0]).copy()
        for k in range(1, len(self.diagonals)):
            dk = np.abs(self.diagonals[k])
            rows[:-k] += dk
            rows[k:] += dk
        return float(rows.max())


@dataclass(frozen=True, eq=False)
class SpinorState:
    """Two complex amplitudes per site; ``amplitudes[i] = (psi+, psi-)`` at ``n_min + i``."""

    window: LatticeWindow
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape == (self.window.dim,):
            amps = amps.reshape(self.window.size, 2)
        if amps.shape != (self.window.size, 2):
            raise ValueError(f"amplitudes must have shape ({self.window.size}, 2)")
        object.__setattr__(self, "amplitudes", _readonly(amps))

    @classmethod
    def from_vector(cls, window: LatticeWindow, vec: np.ndarray) -> "SpinorState":
        return cls(window, np.asarray(vec).reshape(window.size, 2))

    @property
    def vector(self) -> np.ndarray:
        """Interleaved flat view ``(psi+(n_min), psi-(n_min), psi+(n_min+1), ...)``."""
        return self.amplitudes.reshape(-1)

    @property
    def upper(self) -> np.ndarray:
        return self.amplitudes[:, 0]

    @property
    def lower(self) -> np.ndarray:
        return self.amplitudes[:, 1]

    def site_density(self) -> np.ndarray:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=1)

    def site_norms(self) -> np.ndarray:
        return np.sqrt(self.site_density())

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def at(self, n: int) -> np.ndarray:
        return self.amplitudes[n - self.window.n_min]


def delta_state(window: LatticeWindow, n: int = 0, component: str = "+") -> SpinorState:
    """Canonical basis spinor concentrated on one component of site ``n``."""
    vec = np.zeros(window.dim, dtype=complex)
    vec[index_of(window, n, component)] = 1.0
    return SpinorState.from_vector(window, vec)


def _hopping_offdiag(size: int, c: float) -> np.ndarray:
    # (n,+)-(n,-) couples through -c, (n,-)-(n+1,+) through +c
    e = np.empty(max(2 * size - 1, 0))
    e[0::2] = -c
    e[1::2] = c
    return e


def build_dirac(params: DiracParams, realization: Realization) -> OperatorMatrix:
    """Dirac operator on the realization window with zero boundary conditions.

    Diagonal blocks are ``diag(m c^2 + V_n, -m c^2 + V_n)``; the lower
    component couples to the upper one through ``c (psi+_{n+1} - psi+_n)``.
    """
    w = realization.window
    mc2 = params.m * params.c ** 2
    diag = np.empty(w.dim)
    diag[0::2] = realization.values + mc2
    diag[1::2] = realization.values - mc2
    return OperatorMatrix(w, (diag, _hopping_offdiag(w.size, params.c)), params,
                          realization, "dirac")


def build_schrodinger_limit(m: float, realization: Realization) -> OperatorMatrix:
    """The limit operator ``B^2/(2m) + V Lambda`` on the realization window.

    ``B`` is the hopping matrix of the Dirac operator with zero boundary
    conditions (``c = 1``) and ``Lambda`` projects on upper components.
    On interior rows the upper block is the tight-binding Schrodinger
    operator; on the leftmost upper row the diagonal is ``1/(2m)`` because
    the truncated difference operator has no left neighbour there.
    """
    if not (m > 0.0):
        raise ValueError("the nonrelativistic limit needs m > 0")
    w = realization.window
    e = _hopping_offdiag(w.size, 1.0)
    d0 = np.zeros(w.dim)
    d0[:-1] += e ** 2
    d0[1:] += e ** 2
    d0 /= 2.0 * m
    d0[0::2] += realization.values
    d1 = np.zeros(max(w.dim - 1, 0))
    d2 = e[:-1] * e[1:] / (2.0 * m)
    return OperatorMatrix(w, (d0, d1, d2), DiracParams(m, 1.0), realization, "schrodinger")


def schrodinger_matrix(m: float, realization: Realization) -> np.ndarray:
    """Dense tight-binding Schrodinger matrix with Dirichlet boundary conditions."""
    if not (m > 0.0):
        raise ValueError("the Schrodinger operator needs m > 0")
    n = realization.window.size
    h = np.diag(1.0 / m + realization.values)
    off = np.full(n - 1, -1.0 / (2.0 * m))
    return h + np.diag(off, 1) + np.diag(off, -1)


def apply_operator(op: OperatorMatrix, state: SpinorState) -> SpinorState:
    if op.window != state.window:
        raise ValueError("operator and state live on different windows")
    return SpinorState.from_vector(state.window, op.matvec(state.vector))


@dataclass(frozen=True)
class BoundaryOperator:
    """Hops that connect an inner box to the rest of an outer window.

    ``blocks`` maps ``(j, k)``, ``j`` inside and ``k`` outside, to the 2x2
    block ``F_jk``. :meth:`matrix` assembles the self-adjoint operator
    (these blocks together with their adjoints) on the outer window, for
    which ``D_outer = D_inner + D_complement - F``.
    """

    outer: LatticeWindow
    inner: LatticeWindow
    c: float
    blocks: dict = field(default_factory=dict)

    def matrix(self) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for (j, k), blk in self.blocks.items():
            for a, ca in enumerate("+-"):
                for b, cb in enumerate("+-"):
                    if blk[a, b] != 0.0:
                        i1 = index_of(self.outer, j, ca)
                        i2 = index_of(self.outer, k, cb)
                        rows += [i1, i2]
                        cols += [i2, i1]
                        vals += [blk[a, b], blk[a, b]]
        d = self.outer.dim
        return sp.csr_matrix((vals, (rows, cols)), shape=(d, d))


def boundary_operator(outer: LatticeWindow, inner: LatticeWindow,
                      params: DiracParams) -> BoundaryOperator:
    """Boundary operator of ``inner`` relative to ``outer``.

    ``inner == outer`` gives the zero operator. Otherwise ``inner`` must lie
    strictly inside ``outer`` so that both boundary edges exist.
    """
    if inner == outer:
        return BoundaryOperator(outer, inner, params.c, {})
    if not (outer.n_min < inner.n_min and inner.n_max < outer.n_max):
        raise ValueError("inner window must lie strictly inside the outer window")
    c = params.c
    left = -np.array([[0.0, c], [0.0, 0.0]])
    right = -np.array([[0.0, 0.0], [c, 0.0]])
    blocks = {(inner.n_min, inner.n_min - 1): left,
              (inner.n_max, inner.n_max + 1): right}
    return BoundaryOperator(outer, inner, c, blocks)


def position_weights(q: float, window: LatticeWindow) -> np.ndarray:
    """``|n|^q`` per site; ``0^q = 0`` for every ``q > 0``."""
    if not (q > 0.0):
        raise ValueError(f"moment order must be > 0, got {q}")
    return np.abs(window.sites).astype(float) ** q
