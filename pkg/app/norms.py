"""Norms, dual norms, dual-norm maximizers and subdifferentials of l1/l2/lp/linf."""
import itertools
import math
import re
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_serializer, model_validator
from scipy.linalg import null_space

from app.config import Tolerance, settings
from app.errors import (
    DegenerateDirectionError,
    DimensionMismatchError,
    InvalidVectorError,
    NormNotSupportedError,
)

ArrayLike = Union[Sequence[float], np.ndarray]

_LP_PATTERN = re.compile(r"^l?p?\(?\s*([0-9.eE+-]+)\s*\)?$")


class NormFamily(str, Enum):
    L1 = "l1"
    L2 = "l2"
    LP = "lp"
    LINF = "linf"


def _round_exponent(q: float) -> float:
    # keeps dual(dual(k)) == k under floating point
    return float(f"{q:.12g}")


class NormKind(BaseModel):
    """Distance family. Serialized as "L1", "L2", "Lp(q)" or "Linf"."""

    family: NormFamily
    exponent: Optional[float] = None

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="before")
    @classmethod
    def _parse(cls, data):
        if isinstance(data, str):
            return cls._from_text(data)
        return data

    @field_validator("exponent")
    @classmethod
    def _round(cls, v):
        if v is None or not math.isfinite(v):
            return v
        return _round_exponent(v)

    @model_validator(mode="after")
    def _check_exponent(self):
        if self.family is NormFamily.LP:
            if self.exponent is None or not math.isfinite(self.exponent) or self.exponent <= 1:
                raise ValueError("Lp exponent must be finite and strictly greater than 1")
        elif self.exponent is not None:
            raise ValueError(f"{self.family.value} takes no exponent")
        return self

    @model_serializer
    def _serialize(self) -> str:
        return str(self)

    @staticmethod
    def _from_text(text: str) -> dict:
        key = text.strip().lower().replace(" ", "")
        if key in ("l1", "1"):
            return {"family": NormFamily.L1}
        if key in ("l2", "2"):
            return {"family": NormFamily.L2}
        if key in ("linf", "inf", "l_inf", "max"):
            return {"family": NormFamily.LINF}
        match = _LP_PATTERN.match(key)
        if match:
            return {"family": NormFamily.LP, "exponent": float(match.group(1))}
        raise ValueError(f"unknown norm kind: {text!r}")

    @classmethod
    def l1(cls) -> "NormKind":
        return cls(family=NormFamily.L1)

    @classmethod
    def l2(cls) -> "NormKind":
        return cls(family=NormFamily.L2)

    @classmethod
    def linf(cls) -> "NormKind":
        return cls(family=NormFamily.LINF)

    @classmethod
    def lp(cls, exponent: float) -> "NormKind":
        return cls(family=NormFamily.LP, exponent=exponent)

    @property
    def order(self) -> float:
        """The `ord` understood by numpy.linalg.norm and cvxpy.norm"""
        if self.family is NormFamily.L1:
            return 1
        if self.family is NormFamily.L2:
            return 2
        if self.family is NormFamily.LINF:
            return np.inf
        return self.exponent

    @property
    def differentiable(self) -> bool:
        return self.family in (NormFamily.L2, NormFamily.LP)

    @property
    def polyhedral(self) -> bool:
        return self.family in (NormFamily.L1, NormFamily.LINF)

    def dual(self) -> "NormKind":
        if self.family is NormFamily.L1:
            return NormKind.linf()
        if self.family is NormFamily.LINF:
            return NormKind.l1()
        if self.family is NormFamily.L2:
            return NormKind.l2()
        q = self.exponent
        return NormKind.lp(q / (q - 1))

    def __str__(self) -> str:
        if self.family is NormFamily.LP:
            return f"Lp({self.exponent:g})"
        return {"l1": "L1", "l2": "L2", "linf": "Linf"}[self.family.value]


def as_vector(x: ArrayLike, dim: Optional[int] = None, name: str = "vector") -> np.ndarray:
    """Validated float64 copy of x; rejects empty, non-1D and non-finite input."""
    try:
        arr = np.array(x, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidVectorError(f"{name} is not numeric: {exc}") from exc
    if arr.ndim != 1:
        raise InvalidVectorError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidVectorError(f"{name} has dimension 0")
    if not np.all(np.isfinite(arr)):
        raise InvalidVectorError(f"{name} has non-finite entries")
    if dim is not None and arr.size != dim:
        raise DimensionMismatchError(dim, arr.size, name)
    return arr


def norm_eval(x: ArrayLike, kind: NormKind) -> float:
    return float(np.linalg.norm(as_vector(x), ord=kind.order))


def dual_norm_eval(a: ArrayLike, kind: NormKind) -> float:
    return norm_eval(a, kind.dual())


def dual_maximizer(a: ArrayLike, kind: NormKind) -> np.ndarray:
    """A vertex maximizer v of a^T v over the unit ball of `kind`."""
    a = as_vector(a, name="a")
    if not np.any(a):
        raise DegenerateDirectionError()
    if kind.family is NormFamily.L1:
        j0 = int(np.argmax(np.abs(a)))  # lowest index on ties
        v = np.zeros_like(a)
        v[j0] = 1.0 if a[j0] >= 0 else -1.0
        return v
    if kind.family is NormFamily.LINF:
        return np.where(a >= 0, 1.0, -1.0)
    if kind.family is NormFamily.L2:
        return a / np.linalg.norm(a)
    q = kind.exponent
    scaled = a / np.max(np.abs(a))
    v = np.sign(scaled) * np.abs(scaled) ** (1.0 / (q - 1.0))
    return v / np.linalg.norm(v, ord=q)


def norm_gradient(x: ArrayLike, kind: NormKind) -> np.ndarray:
    if not kind.differentiable:
        raise NormNotSupportedError(f"{kind} is not differentiable")
    x = as_vector(x)
    if not np.any(x):
        raise DegenerateDirectionError("norm gradient undefined at 0")
    if kind.family is NormFamily.L2:
        return x / np.linalg.norm(x)
    q = kind.exponent
    scaled = x / np.max(np.abs(x))
    g = np.sign(scaled) * np.abs(scaled) ** (q - 1.0)
    return g / np.linalg.norm(scaled, ord=q) ** (q - 1.0)


def subdiff_contains(x: ArrayLike, g: ArrayLike, kind: NormKind,
                     tol: Optional[Tolerance] = None) -> bool:
    """g^T x = ||x|| and ||g||_* <= 1, both within tol."""
    tol = tol or settings.tolerance
    x = as_vector(x, name="x")
    g = as_vector(g, dim=x.size, name="g")
    nx = norm_eval(x, kind)
    aligned = tol.close(float(g @ x), nx, scale=nx)
    inside = dual_norm_eval(g, kind) <= 1.0 + tol.bound(1.0)
    return bool(aligned and inside)


def basis_containing(v: ArrayLike, gs_tol: Optional[float] = None) -> List[np.ndarray]:
    """p independent vectors, v first, the rest Gram-Schmidt over e^1..e^p."""
    gs_tol = settings.GS_TOL if gs_tol is None else gs_tol
    v = as_vector(v, name="v")
    if not np.any(v):
        raise DegenerateDirectionError()
    p = v.size
    basis = [v.copy()]
    ortho = [v / np.linalg.norm(v)]
    for i in range(p):
        if len(basis) == p:
            break
        r = np.zeros(p)
        r[i] = 1.0
        # two passes of modified Gram-Schmidt
        for _ in range(2):
            for u in ortho:
                r = r - (u @ r) * u
        norm = np.linalg.norm(r)
        if norm <= gs_tol:
            continue
        u = r / norm
        basis.append(u)
        ortho.append(u)
    return basis


def equivalence_constant(norm1: NormKind, norm2: NormKind, p: int) -> float:
    """Smallest C with ||a||*_{norm2} <= C ||a||*_{norm1} for every a in R^p."""
    if norm1 == norm2:
        return 1.0
    inv1 = 1.0 / norm1.dual().order
    inv2 = 1.0 / norm2.dual().order
    return float(p ** max(0.0, inv2 - inv1))


class OptimalFace:
    """Set of maximizers of a^T v over the unit ball of an l1 or linf norm.

    For l1 it is the simplex spanned by sgn(a_j) e^j over the tied argmax
    coordinates; for linf it is the box face fixing sgn(a_i) on nonzero
    coordinates and leaving zero coordinates free in [-1, 1].
    """

    def __init__(self, a: ArrayLike, kind: NormKind, tol: Optional[Tolerance] = None):
        tol = tol or settings.tolerance
        self.a = as_vector(a, name="a")
        if not np.any(self.a):
            raise DegenerateDirectionError()
        self.kind = kind
        mags = np.abs(self.a)
        top = float(mags.max())
        if kind.family is NormFamily.L1:
            self.free = np.flatnonzero(mags >= top - tol.bound(top))
        elif kind.family is NormFamily.LINF:
            self.free = np.flatnonzero(mags <= tol.bound(top))
        else:
            self.free = np.array([], dtype=int)

    @property
    def dimension(self) -> int:
        if self.kind.family is NormFamily.L1:
            return len(self.free) - 1
        if self.kind.family is NormFamily.LINF:
            return len(self.free)
        return 0

    def vertex(self) -> np.ndarray:
        return dual_maximizer(self.a, self.kind)

    def interior(self, theta: float) -> np.ndarray:
        """theta * v1 + (1 - theta) * v2 for two distinct vertices, else the vertex."""
        if self.dimension == 0:
            return self.vertex()
        if self.kind.family is NormFamily.L1:
            j1, j2 = int(self.free[0]), int(self.free[1])
            v = np.zeros_like(self.a)
            v[j1] = theta * (1.0 if self.a[j1] >= 0 else -1.0)
            v[j2] = (1.0 - theta) * (1.0 if self.a[j2] >= 0 else -1.0)
            return v
        v = self.vertex()
        v[self.free] = 2.0 * theta - 1.0
        return v

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.dimension == 0:
            return self.vertex()
        if self.kind.family is NormFamily.L1:
            weights = rng.dirichlet(np.ones(len(self.free)))
            v = np.zeros_like(self.a)
            v[self.free] = weights * np.where(self.a[self.free] >= 0, 1.0, -1.0)
            return v
        v = self.vertex()
        v[self.free] = rng.uniform(-1.0, 1.0, size=len(self.free))
        return v

    def vertices(self) -> List[np.ndarray]:
        if self.dimension == 0:
            return [self.vertex()]
        if self.kind.family is NormFamily.L1:
            out = []
            for j in self.free:
                v = np.zeros_like(self.a)
                v[j] = _sgn(self.a[j])
                out.append(v)
            return out
        base = self.vertex()
        out = []
        for signs in itertools.product((-1.0, 1.0), repeat=len(self.free)):
            v = base.copy()
            v[self.free] = signs
            out.append(v)
        return out


def optimal_face_vertices(a: ArrayLike, kind: NormKind) -> List[np.ndarray]:
    """Vertices of argmax{a^T v : ||v||_kind <= 1}; a single point for smooth norms."""
    return OptimalFace(a, kind).vertices()


def _support(w: np.ndarray, tol: Tolerance) -> np.ndarray:
    top = float(np.max(np.abs(w)))
    return np.flatnonzero(np.abs(w) > tol.bound(top))


def _active(w: np.ndarray, tol: Tolerance) -> np.ndarray:
    top = float(np.max(np.abs(w)))
    return np.flatnonzero(np.abs(w) >= top - tol.bound(top))


def _sgn(x: float) -> float:
    return 1.0 if x >= 0 else -1.0


def subgradient_rows(w: ArrayLike, kind: NormKind, orientation: int,
                     tol: Optional[Tolerance] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Linear rows (E, G) with {a : E a = 0, G a <= 0} = orientation * cone(subdiff ||.||(w)).

    Differentiable norms pin a to a ray; l1 pins the support of w to a common
    magnitude; linf zeroes a off the active set of w.
    """
    tol = tol or settings.tolerance
    w = as_vector(w, name="w")
    if not np.any(w):
        raise DegenerateDirectionError()
    p = w.size
    s = float(orientation)
    eye = np.eye(p)
    if kind.differentiable:
        g = norm_gradient(w, kind)
        complement = null_space(g[None, :]).T
        return complement, (-s * g)[None, :]
    if kind.family is NormFamily.L1:
        support = _support(w, tol)
        j0 = int(support[0])
        anchor = _sgn(w[j0]) * eye[j0]
        equalities = [_sgn(w[i]) * eye[i] - anchor for i in support[1:]]
        inequalities = [-s * anchor]
        for i in np.setdiff1d(np.arange(p), support):
            inequalities.append(eye[i] - s * anchor)
            inequalities.append(-eye[i] - s * anchor)
        E = np.array(equalities) if equalities else np.zeros((0, p))
        return E, np.array(inequalities)
    active = _active(w, tol)
    inactive = np.setdiff1d(np.arange(p), active)
    E = eye[inactive] if len(inactive) else np.zeros((0, p))
    G = np.array([-s * _sgn(w[i]) * eye[i] for i in active])
    return E, G


def pinned_ray(w: ArrayLike, kind: NormKind, orientation: int,
               tol: Optional[Tolerance] = None) -> Optional[np.ndarray]:
    """Direction r when the subgradient cone at w is the single ray {k r : k >= 0}."""
    tol = tol or settings.tolerance
    w = as_vector(w, name="w")
    s = float(orientation)
    if kind.differentiable:
        return s * norm_gradient(w, kind)
    if kind.family is NormFamily.L1:
        if len(_support(w, tol)) == w.size:
            return s * np.where(w >= 0, 1.0, -1.0)
        return None
    active = _active(w, tol)
    if len(active) == 1:
        r = np.zeros_like(w)
        r[active[0]] = s * _sgn(w[active[0]])
        return r
    return None


def pinned_dual_norm(w: ArrayLike, norm1: NormKind, norm2: NormKind, orientation: int,
                     tol: Optional[Tolerance] = None) -> Optional[np.ndarray]:
    """Vector c with ||a||*_{norm2} = c^T a on the subgradient cone, or None.

    Returns None when ||a||*_{norm2} is not linear on that cone, in which case
    only the convex relaxation of a touching equality is available.
    """
    tol = tol or settings.tolerance
    w = as_vector(w, name="w")
    s = float(orientation)
    ray = pinned_ray(w, norm1, orientation, tol)
    if ray is not None:
        return dual_norm_eval(ray, norm2) * ray / float(ray @ ray)
    dual2 = norm2.dual().family
    if norm1.family is NormFamily.L1 and dual2 is NormFamily.LINF:
        j0 = int(_support(w, tol)[0])
        c = np.zeros_like(w)
        c[j0] = s * _sgn(w[j0])
        return c
    if norm1.family is NormFamily.LINF and dual2 is NormFamily.L1:
        c = np.zeros_like(w)
        for i in _active(w, tol):
            c[i] = s * _sgn(w[i])
        return c
    return None
