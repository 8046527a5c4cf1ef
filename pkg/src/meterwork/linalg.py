"""Dense complex linear algebra over small labeled Hilbert spaces.

Value types (`Ket`, `Operator`, `DensityMatrix`, `CompositeSpace`,
`ProjectorSet`) are immutable after construction and validate their
structural invariants against a `NumericPolicy`. Density matrices may be
subnormalized: `trace_weight` is 1 for conventional ensembles and
``exp(-sigma)`` for ensembles redefined by an entropy production ``sigma``
(which may be negative, so weights above 1 are legal).

Operations are pure functions; nothing here mutates shared state, so all
values are safe to share across threads.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, NumericalConsistencyError
from .numeric import DEFAULT_POLICY, NumericPolicy

__all__ = [
    "Ket",
    "Operator",
    "DensityMatrix",
    "CompositeSpace",
    "ProjectorSet",
    "tensor",
    "tensor_kets",
    "partial_trace",
    "evolve",
    "expectation",
    "embed_operator",
    "hermitian_propagator",
]


def _as_square(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def _max_abs(m: np.ndarray) -> float:
    return float(np.max(np.abs(m))) if m.size else 0.0


class Ket:
    """Normalized pure state on a finite-dimensional Hilbert space.

    Subnormalized kets are rejected; statistical subnormalization lives only
    in `DensityMatrix.trace_weight`.
    """

    __slots__ = ("amplitudes", "dim")

    def __init__(self, amplitudes, *, policy: NumericPolicy = DEFAULT_POLICY):
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1).copy()
        if amps.size == 0:
            raise ValueError("ket needs at least one amplitude")
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > policy.norm_tol:
            raise ValueError(f"ket norm deviates from 1 by {abs(norm - 1.0):.3e}")
        amps.setflags(write=False)
        self.amplitudes = amps
        self.dim = int(amps.size)

    @classmethod
    def basis(cls, dim: int, index: int) -> "Ket":
        amps = np.zeros(dim, dtype=complex)
        amps[index] = 1.0
        return cls(amps)

    @classmethod
    def normalized(cls, amplitudes) -> "Ket":
        """Build a ket from unnormalized amplitudes by dividing out the norm."""
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = float(np.linalg.norm(amps))
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return cls(amps / norm)

    def overlap(self, other: "Ket") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def __repr__(self) -> str:
        return f"Ket(dim={self.dim})"


class Operator:
    """Dense operator with tri-state structure flags.

    Each of ``hermitian``, ``unitary``, ``projector`` is True (asserted and
    validated at construction), False (asserted absent), or None (unchecked).
    A projector assertion implies the hermitian one.
    """

    __slots__ = ("matrix", "dim", "hermitian", "unitary", "projector")

    def __init__(
        self,
        matrix,
        *,
        hermitian: bool | None = None,
        unitary: bool | None = None,
        projector: bool | None = None,
        policy: NumericPolicy = DEFAULT_POLICY,
    ):
        m = _as_square(matrix).copy()
        if projector is True:
            hermitian = True
        if hermitian is True:
            dev = _max_abs(m - m.conj().T)
            if dev > policy.hermitian_tol:
                raise ValueError(f"hermitian assertion fails by {dev:.3e}")
        if unitary is True:
            dev = _max_abs(m.conj().T @ m - np.eye(m.shape[0]))
            if dev > policy.unitary_tol:
                raise ValueError(f"unitary assertion fails by {dev:.3e}")
        if projector is True:
            dev = _max_abs(m @ m - m)
            if dev > policy.projector_tol:
                raise ValueError(f"projector assertion fails by {dev:.3e}")
        m.setflags(write=False)
        self.matrix = m
        self.dim = int(m.shape[0])
        self.hermitian = hermitian
        self.unitary = unitary
        self.projector = projector

    @classmethod
    def identity(cls, dim: int) -> "Operator":
        return cls(np.eye(dim), hermitian=True, unitary=True, projector=True)

    @classmethod
    def from_diagonal(cls, values) -> "Operator":
        vals = np.asarray(values)
        herm = True if np.isrealobj(vals) or _max_abs(vals.imag) == 0.0 else None
        return cls(np.diag(vals.astype(complex)), hermitian=herm)

    def dagger(self) -> "Operator":
        return Operator(
            self.matrix.conj().T,
            hermitian=self.hermitian,
            unitary=self.unitary,
            projector=self.projector,
        )

    def is_hermitian(self, policy: NumericPolicy = DEFAULT_POLICY) -> bool:
        if self.hermitian is not None:
            return self.hermitian
        return _max_abs(self.matrix - self.matrix.conj().T) <= policy.hermitian_tol

    def __repr__(self) -> str:
        flags = []
        for name in ("hermitian", "unitary", "projector"):
            v = getattr(self, name)
            if v is not None:
                flags.append(f"{name}={v}")
        inner = f"dim={self.dim}" + (", " + ", ".join(flags) if flags else "")
        return f"Operator({inner})"


class DensityMatrix:
    """Hermitian positive-semidefinite matrix whose trace equals trace_weight.

    ``trace_weight`` is 1 for conventional ensembles. Redefined ensembles
    carry ``exp(-sigma)``; the measured-side bookkeeping uses negative sigma,
    so weights above 1 occur and are accepted.
    """

    __slots__ = ("matrix", "dim", "trace_weight")

    def __init__(
        self,
        matrix,
        trace_weight: float | None = None,
        *,
        policy: NumericPolicy = DEFAULT_POLICY,
    ):
        m = _as_square(matrix).copy()
        dev = _max_abs(m - m.conj().T)
        if dev > policy.hermitian_tol:
            raise ValueError(f"density matrix not hermitian: deviation {dev:.3e}")
        lo = float(np.min(np.linalg.eigvalsh(m)))
        if lo < -policy.psd_tol:
            raise ValueError(f"density matrix has negative eigenvalue {lo:.3e}")
        tr = complex(np.trace(m))
        if abs(tr.imag) > policy.trace_tol:
            raise ValueError(f"density matrix trace has imaginary part {tr.imag:.3e}")
        if trace_weight is None:
            trace_weight = tr.real
        elif abs(tr.real - trace_weight) > policy.trace_tol:
            raise ValueError(
                f"trace {tr.real!r} disagrees with trace_weight {trace_weight!r}"
            )
        if not (trace_weight > 0.0 and math.isfinite(trace_weight)):
            raise ValueError(f"trace_weight must be positive and finite, got {trace_weight!r}")
        m.setflags(write=False)
        self.matrix = m
        self.dim = int(m.shape[0])
        self.trace_weight = float(trace_weight)

    @classmethod
    def from_ket(cls, ket: Ket) -> "DensityMatrix":
        return cls(np.outer(ket.amplitudes, ket.amplitudes.conj()), 1.0)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim, 1.0)

    def scaled(self, factor: float) -> "DensityMatrix":
        """Rescale the statistical weight (used by ensemble redefinitions)."""
        if not (factor > 0.0 and math.isfinite(factor)):
            raise ValueError(f"scale factor must be positive and finite, got {factor!r}")
        return DensityMatrix(self.matrix * factor, self.trace_weight * factor)

    def normalized(self) -> "DensityMatrix":
        return DensityMatrix(self.matrix / self.trace_weight, 1.0)

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.matrix)

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim}, trace_weight={self.trace_weight:.6g})"


class CompositeSpace:
    """Ordered list of labeled tensor factors.

    The ordering is significant and fixed at construction; partial traces and
    embeddings never reorder subsystems implicitly.
    """

    __slots__ = ("subsystems", "labels", "dims", "total_dim", "_axis")

    def __init__(self, subsystems: Sequence[tuple[str, int]]):
        subs = tuple((str(label), int(dim)) for label, dim in subsystems)
        if not subs:
            raise ValueError("composite space needs at least one subsystem")
        labels = tuple(label for label, _ in subs)
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate subsystem labels in {labels}")
        dims = tuple(dim for _, dim in subs)
        if any(d <= 0 for d in dims):
            raise ValueError(f"subsystem dimensions must be positive, got {dims}")
        self.subsystems = subs
        self.labels = labels
        self.dims = dims
        self.total_dim = int(np.prod(dims))
        self._axis = {label: i for i, label in enumerate(labels)}

    def axis_of(self, label: str) -> int:
        if label not in self._axis:
            raise ValueError(f"unknown subsystem label {label!r}; have {self.labels}")
        return self._axis[label]

    def dim_of(self, label: str) -> int:
        return self.dims[self.axis_of(label)]

    def __repr__(self) -> str:
        inner = ", ".join(f"{l}:{d}" for l, d in self.subsystems)
        return f"CompositeSpace({inner})"


class ProjectorSet:
    """Complete family of orthogonal projectors with outcome labels.

    Completeness (projectors summing to the identity) is validated at
    construction; orthogonality follows from completeness plus idempotence.
    """

    __slots__ = ("projectors", "labels", "dim")

    def __init__(
        self,
        projectors: Sequence[Operator],
        labels: Sequence | None = None,
        *,
        policy: NumericPolicy = DEFAULT_POLICY,
    ):
        projs = tuple(projectors)
        if not projs:
            raise ValueError("projector set cannot be empty")
        dim = projs[0].dim
        for p in projs:
            if p.dim != dim:
                raise ValueError("projectors have mismatched dimensions")
            if p.projector is not True:
                # revalidate unflagged input rather than trusting the caller
                Operator(p.matrix, projector=True, policy=policy)
        total = sum(p.matrix for p in projs)
        dev = _max_abs(total - np.eye(dim))
        if dev > policy.completeness_tol:
            raise ValueError(f"projectors do not sum to identity: deviation {dev:.3e}")
        if labels is None:
            labels = tuple(range(len(projs)))
        else:
            labels = tuple(labels)
            if len(labels) != len(projs):
                raise ValueError("label count does not match projector count")
            if len(set(labels)) != len(labels):
                raise ValueError(f"outcome labels must be unique, got {labels}")
        self.projectors = projs
        self.labels = labels
        self.dim = dim

    def __len__(self) -> int:
        return len(self.projectors)

    def embedded(self, space: CompositeSpace, acting_on: Sequence[str]) -> "ProjectorSet":
        """Lift every projector onto `space` acting on the named factors."""
        lifted = [embed_operator(p, space, acting_on) for p in self.projectors]
        return ProjectorSet(lifted, self.labels)

    def __repr__(self) -> str:
        return f"ProjectorSet(n={len(self.projectors)}, dim={self.dim})"


def tensor(a: Operator, b: Operator, *, policy: NumericPolicy = DEFAULT_POLICY) -> Operator:
    """Kronecker product with flag algebra and a desk-scale capacity guard."""
    out_dim = a.dim * b.dim
    if out_dim > policy.max_dim:
        raise CapacityError(
            f"tensor product dimension {out_dim} exceeds budget {policy.max_dim}"
        )

    def both(x, y):
        return True if (x is True and y is True) else None

    return Operator(
        np.kron(a.matrix, b.matrix),
        hermitian=both(a.hermitian, b.hermitian),
        unitary=both(a.unitary, b.unitary),
        projector=both(a.projector, b.projector),
        policy=policy,
    )


def tensor_kets(a: Ket, b: Ket) -> Ket:
    return Ket(np.kron(a.amplitudes, b.amplitudes))


def _trace_out(mat: np.ndarray, dims: Sequence[int], keep_axes: Sequence[int]) -> np.ndarray:
    n = len(dims)
    arr = mat.reshape(*dims, *dims)
    n_cur = n
    for ax in sorted(set(range(n)) - set(keep_axes), reverse=True):
        arr = np.trace(arr, axis1=ax, axis2=ax + n_cur)
        n_cur -= 1
    kept = int(np.prod([dims[a] for a in sorted(keep_axes)])) if keep_axes else 1
    return arr.reshape(kept, kept)


def partial_trace(
    rho: DensityMatrix,
    space: CompositeSpace,
    keep: Iterable[str],
    *,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> DensityMatrix:
    """Reduced density matrix on the kept subsystems (original order preserved).

    The statistical weight is carried through unchanged.
    """
    keep_labels = set(keep)
    if not keep_labels:
        raise ValueError("keep must name at least one subsystem")
    keep_axes = sorted(space.axis_of(label) for label in keep_labels)
    if rho.dim != space.total_dim:
        raise ValueError(
            f"state dimension {rho.dim} does not match space dimension {space.total_dim}"
        )
    reduced = _trace_out(rho.matrix, space.dims, keep_axes)
    reduced = 0.5 * (reduced + reduced.conj().T)
    return DensityMatrix(reduced, rho.trace_weight, policy=policy)


def hermitian_propagator(
    h: Operator,
    duration: float,
    *,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> np.ndarray:
    """exp(-i h duration) for hermitian h, via eigendecomposition."""
    if h.hermitian is False or not h.is_hermitian(policy):
        raise ValueError("generator must be hermitian")
    if not math.isfinite(duration):
        raise ValueError(f"duration must be finite, got {duration!r}")
    w, v = np.linalg.eigh(h.matrix)
    return (v * np.exp(-1j * w * duration)) @ v.conj().T


def evolve(state, h: Operator, duration: float, *, policy: NumericPolicy = DEFAULT_POLICY):
    """Unitary evolution of a Ket or DensityMatrix under a hermitian generator.

    Norm (or trace) drift is asserted against the preservation tolerance and
    then snapped away, so long evolution chains stay exactly normalized.
    """
    u = hermitian_propagator(h, duration, policy=policy)
    if isinstance(state, Ket):
        amps = u @ state.amplitudes
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > policy.preservation_tol:
            raise NumericalConsistencyError(f"evolution broke normalization: {norm!r}")
        return Ket(amps / norm, policy=policy)
    if isinstance(state, DensityMatrix):
        m = u @ state.matrix @ u.conj().T
        m = 0.5 * (m + m.conj().T)
        tr = float(np.trace(m).real)
        if abs(tr - state.trace_weight) > policy.preservation_tol:
            raise NumericalConsistencyError(
                f"evolution broke the trace: {tr!r} vs {state.trace_weight!r}"
            )
        m *= state.trace_weight / tr
        return DensityMatrix(m, state.trace_weight, policy=policy)
    raise TypeError(f"cannot evolve {type(state).__name__}")


def expectation(
    obs: Operator,
    rho: DensityMatrix,
    *,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> float:
    """tr(obs rho), asserting the imaginary residue is below tolerance."""
    if obs.hermitian is False or not obs.is_hermitian(policy):
        raise ValueError("observable must be hermitian")
    if obs.dim != rho.dim:
        raise ValueError(f"dimension mismatch: observable {obs.dim}, state {rho.dim}")
    val = complex(np.trace(obs.matrix @ rho.matrix))
    if abs(val.imag) > policy.imag_tol:
        raise NumericalConsistencyError(
            f"expectation value has imaginary residue {val.imag:.3e}"
        )
    return val.real


def embed_operator(
    op: Operator,
    space: CompositeSpace,
    acting_on: Sequence[str],
    *,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> Operator:
    """Lift an operator acting on the named factors (in the given order) to the
    full composite space, tensoring identities on the rest.

    The named factors need not be adjacent; index permutation handles the
    general case.
    """
    acting = [space.axis_of(label) for label in acting_on]
    if len(set(acting)) != len(acting):
        raise ValueError(f"repeated labels in {tuple(acting_on)}")
    acting_dim = int(np.prod([space.dims[a] for a in acting]))
    if op.dim != acting_dim:
        raise ValueError(
            f"operator dimension {op.dim} does not match factors {tuple(acting_on)} "
            f"of total dimension {acting_dim}"
        )
    rest = [a for a in range(len(space.dims)) if a not in acting]
    rest_dim = int(np.prod([space.dims[a] for a in rest])) if rest else 1
    big = np.kron(op.matrix, np.eye(rest_dim))

    order = acting + rest
    reordered_dims = [space.dims[a] for a in order]
    digits = np.unravel_index(np.arange(space.total_dim), space.dims)
    perm = np.ravel_multi_index([digits[a] for a in order], reordered_dims)
    lifted = big[np.ix_(perm, perm)]
    return Operator(
        lifted,
        hermitian=op.hermitian,
        unitary=op.unitary,
        projector=op.projector,
        policy=policy,
    )
