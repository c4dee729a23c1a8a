"""Cross-coupled polynomial vector fields.

Component ``i`` of the field is ``eps[i] * x[i] + V_i(x without x[i])`` where
``V_i`` is a polynomial without constant term in the *other* variables. The
origin is therefore always an equilibrium.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .series import ScalingSpec

BASIS_MODES = ("full", "separable")
SIGN_CONVENTIONS = ("plain", "literal")
MODEL_KIND = "poly_vector_field"


class ModelError(ValueError):
    """Invalid model structure or malformed model document."""


def _num(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), ".17g")


def monomials(n: int, degree: int, skip: int, mode: str = "full") -> list[tuple[int, ...]]:
    """Exponent vectors of total degree 1..degree that leave variable ``skip`` out.

    Ordered by total degree, then lexicographically descending, so a planar
    component lists ``y, y**2, ..., y**d``.
    """
    if mode not in BASIS_MODES:
        raise ModelError(f"unknown basis_mode {mode!r}")
    others = [j for j in range(n) if j != skip]
    out = []
    for total in range(1, degree + 1):
        level = []
        if mode == "separable":
            for j in others:
                e = [0] * n
                e[j] = total
                level.append(tuple(e))
        else:
            for combo in itertools.combinations_with_replacement(others, total):
                e = [0] * n
                for j in combo:
                    e[j] += 1
                level.append(tuple(e))
        out.extend(sorted(level, reverse=True))
    return out


@dataclass(frozen=True)
class Domain:
    """Axis-aligned region of interest; trajectories escape by leaving
    ``[lower - escape_margin, upper]`` on any axis."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    escape_margin: float = 0.0

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi):
            raise ModelError("domain bounds differ in length")
        for a, b in zip(lo, hi):
            if not a < b:
                raise ModelError(f"domain lower bound {a} not below upper bound {b}")
        if not self.escape_margin >= 0:
            raise ModelError("escape_margin must be nonnegative")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def positive_orthant(cls, n: int) -> "Domain":
        return cls((0.0,) * n, (math.inf,) * n)

    @classmethod
    def box(cls, bounds: Sequence[float], escape_margin: float = 0.0) -> "Domain":
        """From a flat ``[lo0, hi0, lo1, hi1, ...]`` sequence."""
        b = [float(v) for v in bounds]
        if len(b) % 2 or not b:
            raise ModelError("box needs lo,hi pairs")
        return cls(tuple(b[0::2]), tuple(b[1::2]), escape_margin)

    @property
    def n(self) -> int:
        return len(self.lower)

    @property
    def bounded(self) -> bool:
        return all(math.isfinite(v) for v in self.lower + self.upper)

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= np.asarray(self.lower) - self.escape_margin) and np.all(x <= self.upper))

    def to_dict(self) -> dict:
        return {
            "lower": [_num(v) for v in self.lower],
            "upper": [_num(v) for v in self.upper],
            "escape_margin": _num(self.escape_margin),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Domain":
        try:
            return cls(
                tuple(float(v) for v in doc["lower"]),
                tuple(float(v) for v in doc["upper"]),
                float(doc.get("escape_margin", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed domain block: {exc}") from exc


@dataclass(frozen=True, eq=False)
class PolyVectorField:
    """Fitted or hand-specified model ``x_i' = eps_i x_i + V_i(others)``.

    ``coeffs[i]`` maps exponent tuples (length n, zero at position i) to
    plain-signed coefficients; absent monomials are zero.
    """

    eps: tuple[float, ...]
    coeffs: tuple[Mapping[tuple[int, ...], float], ...]
    degree: int
    basis_mode: str = "full"
    domain: Domain | None = None
    scaling: ScalingSpec | None = None
    sign_convention: str = "plain"
    variable_names: tuple[str, ...] | None = None
    provenance: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps)
        n = len(eps)
        if n < 1:
            raise ModelError("model needs at least one variable")
        if len(self.coeffs) != n:
            raise ModelError(f"{len(self.coeffs)} coefficient tables for dimension {n}")
        if not (isinstance(self.degree, (int, np.integer)) and self.degree >= 1):
            raise ModelError(f"degree must be an integer >= 1, got {self.degree!r}")
        if self.basis_mode not in BASIS_MODES:
            raise ModelError(f"unknown basis_mode {self.basis_mode!r}")
        if self.sign_convention not in SIGN_CONVENTIONS:
            raise ModelError(f"unknown sign_convention {self.sign_convention!r}")
        if not all(math.isfinite(e) for e in eps):
            raise ModelError("eps must be finite")
        tables = []
        for i, table in enumerate(self.coeffs):
            clean = {}
            for key, c in table.items():
                e = tuple(int(v) for v in key)
                if len(e) != n or any(v < 0 for v in e):
                    raise ModelError(f"component {i}: bad exponent vector {key!r}")
                total = sum(e)
                if total == 0:
                    raise ModelError(f"component {i}: constant monomial is not allowed")
                if e[i] != 0:
                    raise ModelError(f"component {i}: monomial {e} involves its own variable")
                if total > self.degree:
                    raise ModelError(f"component {i}: monomial {e} exceeds degree {self.degree}")
                if self.basis_mode == "separable" and sum(v > 0 for v in e) > 1:
                    raise ModelError(f"component {i}: cross monomial {e} in separable basis")
                c = float(c)
                if not math.isfinite(c):
                    raise ModelError(f"component {i}: non-finite coefficient")
                clean[e] = c
            tables.append(clean)
        if self.domain is not None and self.domain.n != n:
            raise ModelError("domain dimension differs from model dimension")
        if self.scaling is not None and len(self.scaling.factors) != n:
            raise ModelError("scaling dimension differs from model dimension")
        if self.variable_names is not None and len(self.variable_names) != n:
            raise ModelError("variable_names length differs from model dimension")
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "coeffs", tuple(tables))
        object.__setattr__(self, "degree", int(self.degree))
        if self.variable_names is not None:
            object.__setattr__(self, "variable_names", tuple(self.variable_names))
        object.__setattr__(self, "_terms", self._compile())

    # -- structure ---------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.eps)

    @property
    def names(self) -> tuple[str, ...]:
        return self.variable_names or tuple(f"x{i + 1}" for i in range(self.n))

    def basis(self, i: int) -> list[tuple[int, ...]]:
        return monomials(self.n, self.degree, i, self.basis_mode)

    def _compile(self) -> kernels.Terms:
        coef, comp, exps = [], [], []
        for i in range(self.n):
            unit = [0] * self.n
            unit[i] = 1
            coef.append(self.eps[i])
            comp.append(i)
            exps.append(unit)
            for e in self.basis(i):
                c = self.coeffs[i].get(e, 0.0)
                if c != 0.0:
                    coef.append(c)
                    comp.append(i)
                    exps.append(list(e))
        return kernels.Terms(
            np.array(coef, dtype=np.float64),
            np.array(comp, dtype=np.intp),
            np.array(exps, dtype=np.intp).reshape(len(coef), self.n),
            self.n,
            self.degree,
        )

    @property
    def terms(self) -> kernels.Terms:
        return self._terms

    def scaled_time(self, c: float) -> "PolyVectorField":
        """The field multiplied by ``c`` (a change of time unit)."""
        return self.replace(
            eps=tuple(c * e for e in self.eps),
            coeffs=tuple({k: c * v for k, v in t.items()} for t in self.coeffs),
        )

    def reversed(self) -> "PolyVectorField":
        return self.scaled_time(-1.0)

    def replace(self, **changes) -> "PolyVectorField":
        kw = dict(
            eps=self.eps,
            coeffs=self.coeffs,
            degree=self.degree,
            basis_mode=self.basis_mode,
            domain=self.domain,
            scaling=self.scaling,
            sign_convention=self.sign_convention,
            variable_names=self.variable_names,
            provenance=self.provenance,
        )
        kw.update(changes)
        return PolyVectorField(**kw)

    # -- evaluation --------------------------------------------------------

    def _check_states(self, states, what="state") -> np.ndarray:
        x = np.asarray(states, dtype=float)
        if x.shape[-1:] != (self.n,):
            raise ModelError(f"{what} has length {x.shape[-1] if x.ndim else 0}, model dimension is {self.n}")
        if not np.all(np.isfinite(x)):
            raise ModelError(f"non-finite {what}")
        return x

    def __call__(self, state) -> np.ndarray:
        return evaluate(self, state)

    def coupling(self, i: int, states) -> np.ndarray:
        """``V_i`` alone (without the self term) at each row of ``states``."""
        x = np.atleast_2d(np.asarray(states, dtype=float))
        out = np.zeros(x.shape[0])
        for e, c in self.coeffs[i].items():
            out += c * np.prod(x ** np.asarray(e), axis=1)
        return out

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        components = []
        for i in range(self.n):
            components.append(
                [
                    {"exponents": list(e), "coefficient": _num(self.coeffs[i].get(e, 0.0))}
                    for e in self.basis(i)
                ]
            )
        return {
            "kind": MODEL_KIND,
            "dimension": self.n,
            "degree": self.degree,
            "basis_mode": self.basis_mode,
            "sign_convention": self.sign_convention,
            "variables": list(self.names),
            "eps": [_num(e) for e in self.eps],
            "components": components,
            "domain": (self.domain or Domain.positive_orthant(self.n)).to_dict(),
            "scaling": (self.scaling or ScalingSpec.identity(self.n)).to_dict(),
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "PolyVectorField":
        if not isinstance(doc, Mapping):
            raise ModelError("model document must be a JSON object")
        if doc.get("kind", MODEL_KIND) != MODEL_KIND:
            raise ModelError(f"not a polynomial field document (kind={doc.get('kind')!r})")
        try:
            n = int(doc["dimension"])
            eps = tuple(float(e) for e in doc["eps"])
            comps = doc["components"]
            if len(eps) != n or len(comps) != n:
                raise ModelError("eps/components length differs from dimension")
            coeffs = []
            for comp in comps:
                table = {}
                for term in comp:
                    key = tuple(int(v) for v in term["exponents"])
                    if key in table:
                        raise ModelError(f"duplicate monomial {key}")
                    table[key] = float(term["coefficient"])
                coeffs.append(table)
            return cls(
                eps=eps,
                coeffs=tuple(coeffs),
                degree=int(doc["degree"]),
                basis_mode=doc.get("basis_mode", "full"),
                domain=Domain.from_dict(doc["domain"]) if "domain" in doc else None,
                scaling=ScalingSpec.from_dict(doc["scaling"]) if "scaling" in doc else None,
                sign_convention=doc.get("sign_convention", "plain"),
                variable_names=tuple(doc["variables"]) if "variables" in doc else None,
                provenance=dict(doc.get("provenance", {})),
            )
        except ModelError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed model document: {exc}") from exc


def evaluate(model: PolyVectorField, state) -> np.ndarray:
    """Field value at one state (length n) or at each row of an (S, n) array."""
    x = model._check_states(state)
    if x.ndim == 1:
        return kernels.eval_field(model.terms, x[None, :])[0]
    return kernels.eval_field(model.terms, x)


def jacobian(model: PolyVectorField, state) -> np.ndarray:
    """Analytic Jacobian at one state, or an (S, n, n) stack for (S, n) input."""
    x = model._check_states(state)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    S, n = X.shape
    J = np.zeros((S, n, n))
    for i in range(n):
        J[:, i, i] = model.eps[i]
        for e, c in model.coeffs[i].items():
            e = np.asarray(e)
            for j in np.flatnonzero(e):
                de = e.copy()
                de[j] -= 1
                J[:, i, j] += c * e[j] * np.prod(X ** de, axis=1)
    return J[0] if single else J


def dumps(model: PolyVectorField) -> str:
    return json.dumps(model.to_dict(), indent=2) + "\n"


def loads(text: str) -> PolyVectorField:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file is not valid JSON: {exc}") from exc
    return PolyVectorField.from_dict(doc)


def from_arrays(
    eps: Sequence[float],
    coupling: Sequence[Sequence[float]],
    *,
    sign_convention: str = "plain",
    **kw,
) -> PolyVectorField:
    """Build a separable model from per-component coefficient lists.

    ``coupling[i][k]`` multiplies the (k+1)-th power of the single other
    variable in 2-D, or in general each entry in ``monomials(.., 'separable')``
    order.
    """
    n = len(eps)
    degree = kw.pop("degree", None)
    if degree is None:
        per = [len(c) for c in coupling]
        degree = max(1, max(per) // max(1, n - 1))
    tables = []
    for i, cs in enumerate(coupling):
        basis = monomials(n, degree, i, "separable")
        if len(cs) > len(basis):
            raise ModelError(f"component {i}: {len(cs)} coefficients for {len(basis)} monomials")
        tables.append({e: float(c) for e, c in zip(basis, cs)})
    mode = kw.pop("basis_mode", "full" if n <= 2 else "separable")
    return PolyVectorField(
        eps=tuple(eps), coeffs=tuple(tables), degree=degree, basis_mode=mode,
        sign_convention=sign_convention, **kw,
    )
