"""Two-point-measurement (TPM) work statistics and the Jarzynski equality.

A drive is a control path lambda_t sampled at t_n = n t_f / N with a
piecewise-constant propagator per step. Work is the difference of projective
energy readings at the endpoints; degenerate energy sectors collapse with
the full sector projector. The heat bath enters only through the thermal
initial state; the drive itself is strictly unitary.

Two independent evaluations of <exp(-beta W)> are provided:

* `jarzynski_exact` enumerates all (initial sector, final sector) outcome
  pairs with their Born weights;
* `jarzynski_time_ordered` multiplies the per-step Heisenberg-picture
  factors exp(-beta H_H(t_{n+1})) exp(+beta H_H(t_n)) in time order and
  traces against the thermal state.

Both return exp(-beta dF) up to float rounding for any unitary drive, and
agreeing with each other is a structural cross-check of the propagator and
sector machinery.

Monte Carlo estimation (`tpm_sample`) partitions samples over seeded streams
so results are bit-identical at any worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .linalg import DensityMatrix, Operator
from .numeric import DEFAULT_POLICY, NumericPolicy
from .streams import cdf_of, draw_indices, map_streams, stream_blocks, stream_generator
from .superselection import EnergySector, energy_sectors

__all__ = [
    "DriveSchedule",
    "WorkSample",
    "JarzynskiReport",
    "thermal_state",
    "delta_F",
    "tpm_sample",
    "jarzynski_exact",
    "jarzynski_time_ordered",
    "jarzynski_equality_check",
    "modified_jarzynski_check",
]


@dataclass(frozen=True)
class DriveSchedule:
    """Control path lambda_{t_0..t_N} with its Hamiltonian map.

    All Hamiltonians along the path are validated hermitian with a common
    dimension at construction, and cached.
    """

    hamiltonian_at: Callable[[float], Operator]
    lambdas: np.ndarray
    t_f: float
    _h_matrices: tuple[np.ndarray, ...] = field(init=False, repr=False)

    def __post_init__(self):
        lams = np.asarray(self.lambdas, dtype=float)
        if lams.ndim != 1 or lams.size < 2:
            raise ValueError("control path needs at least the two endpoint values")
        if not (self.t_f >= 0.0 and math.isfinite(self.t_f)):
            raise ValueError(f"t_f must be finite and nonnegative, got {self.t_f!r}")
        lams.setflags(write=False)
        object.__setattr__(self, "lambdas", lams)
        mats = []
        dim = None
        for lam in lams:
            h = self.hamiltonian_at(float(lam))
            if h.hermitian is False or not h.is_hermitian():
                raise ValueError(f"hamiltonian at control value {lam!r} is not hermitian")
            if dim is None:
                dim = h.dim
            elif h.dim != dim:
                raise ValueError(
                    f"hamiltonian dimension changed along the path: {h.dim} != {dim}"
                )
            mats.append(h.matrix)
        object.__setattr__(self, "_h_matrices", tuple(mats))

    @classmethod
    def linear(
        cls,
        hamiltonian_at: Callable[[float], Operator],
        t_f: float,
        n_steps: int,
        lam_start: float = 0.0,
        lam_end: float = 1.0,
    ) -> "DriveSchedule":
        if n_steps < 1:
            raise ValueError(f"need at least one step, got {n_steps}")
        return cls(hamiltonian_at, np.linspace(lam_start, lam_end, n_steps + 1), t_f)

    @classmethod
    def constant(cls, h: Operator, t_f: float = 1.0, n_steps: int = 1) -> "DriveSchedule":
        return cls.linear(lambda _lam: h, t_f, n_steps)

    @classmethod
    def quench(cls, h_initial: Operator, h_final: Operator) -> "DriveSchedule":
        """Sudden switch: endpoints differ, evolution time is zero."""
        return cls(
            lambda lam: h_initial if lam < 0.5 else h_final,
            np.array([0.0, 1.0]),
            0.0,
        )

    @property
    def n_steps(self) -> int:
        return len(self.lambdas) - 1

    @property
    def dim(self) -> int:
        return self._h_matrices[0].shape[0]

    def hamiltonian_matrix(self, n: int) -> np.ndarray:
        return self._h_matrices[n]

    def initial_hamiltonian(self) -> Operator:
        return Operator(self._h_matrices[0], hermitian=True)

    def final_hamiltonian(self) -> Operator:
        return Operator(self._h_matrices[-1], hermitian=True)

    def step_propagators(self) -> list[np.ndarray]:
        """exp(-i H(lambda_{t_n}) dt) for each step, left control endpoint."""
        dt = self.t_f / self.n_steps
        out = []
        for n in range(self.n_steps):
            w, v = np.linalg.eigh(self._h_matrices[n])
            out.append((v * np.exp(-1j * w * dt)) @ v.conj().T)
        return out

    def total_propagator(self) -> np.ndarray:
        u = np.eye(self.dim, dtype=complex)
        for step in self.step_propagators():
            u = step @ u
        return u


@dataclass(frozen=True)
class WorkSample:
    """One TPM record; work is exactly the energy difference."""

    initial_energy: float
    final_energy: float
    initial_outcome_index: int
    final_outcome_index: int
    stream_id: int = 0
    draw_id: int = 0
    work: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "work", self.final_energy - self.initial_energy)


@dataclass(frozen=True)
class JarzynskiReport:
    """Estimator summary against the closed-form free-energy target."""

    estimator_mean: float
    standard_error: float
    exact_value: float
    delta_f: float
    sample_count: int
    beta: float
    passed: bool
    mean_work: float
    work_floor: float | None = None
    inequality_ok: bool | None = None
    sigma_total: float | None = None

    def __post_init__(self):
        if self.standard_error < 0.0:
            raise ValueError("standard error cannot be negative")
        if self.sample_count <= 0:
            raise ValueError("report needs at least one sample")

    def to_dict(self) -> dict:
        out = {
            "estimator_mean": self.estimator_mean,
            "standard_error": self.standard_error,
            "exact_value": self.exact_value,
            "delta_f": self.delta_f,
            "sample_count": self.sample_count,
            "beta": self.beta,
            "passed": self.passed,
            "mean_work": self.mean_work,
        }
        if self.work_floor is not None:
            out["work_floor"] = self.work_floor
            out["inequality_ok"] = self.inequality_ok
            out["sigma_total"] = self.sigma_total
        return out


def thermal_state(
    h: Operator,
    beta: float,
    *,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> DensityMatrix:
    """Gibbs state exp(-beta h)/Z."""
    if h.hermitian is False or not h.is_hermitian(policy):
        raise ValueError("thermal state needs a hermitian hamiltonian")
    if beta < 0.0:
        raise ValueError(f"beta must be nonnegative, got {beta!r}")
    w, v = np.linalg.eigh(h.matrix)
    weights = np.exp(-beta * (w - w.min()))
    weights /= weights.sum()
    m = (v * weights) @ v.conj().T
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(m, 1.0, policy=policy)


def _log_partition(h: Operator, beta: float) -> float:
    return float(logsumexp(-beta * np.linalg.eigvalsh(h.matrix)))


def delta_F(h_initial: Operator, h_final: Operator, beta: float) -> float:
    """Equilibrium free-energy difference -(1/beta) ln(Z_final / Z_initial)."""
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    for h in (h_initial, h_final):
        if h.hermitian is False or not h.is_hermitian():
            raise ValueError("free energy needs hermitian hamiltonians")
    return -(_log_partition(h_final, beta) - _log_partition(h_initial, beta)) / beta


def _sector_tables(
    schedule: DriveSchedule,
    beta: float,
    *,
    policy: NumericPolicy,
) -> tuple[list[EnergySector], list[EnergySector], np.ndarray, np.ndarray]:
    """Initial sectors, final sectors, Gibbs sector probabilities, and the
    conditional outcome matrix T[i, f] for the full drive propagator."""
    init = energy_sectors(schedule.initial_hamiltonian(), policy=policy)
    fin = energy_sectors(schedule.final_hamiltonian(), policy=policy)
    energies = np.array([s.energy for s in init])
    degens = np.array([s.degeneracy for s in init], dtype=float)
    logw = -beta * energies + np.log(degens)
    p_init = np.exp(logw - logsumexp(logw))
    p_init /= p_init.sum()

    u = schedule.total_propagator()
    cond = np.empty((len(init), len(fin)))
    for i, si in enumerate(init):
        evolved = u @ (si.projector.matrix / si.degeneracy) @ u.conj().T
        for f, sf in enumerate(fin):
            cond[i, f] = float(np.trace(sf.projector.matrix @ evolved).real)
    cond = np.clip(cond, 0.0, None)
    cond /= cond.sum(axis=1, keepdims=True)
    return init, fin, p_init, cond


def tpm_sample(
    schedule: DriveSchedule,
    beta: float,
    n_samples: int,
    seed: int,
    *,
    workers: int | None = None,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> list[WorkSample]:
    """Draw TPM work samples for a drive prepared in the Gibbs state.

    Per sample: draw an initial energy sector from the Gibbs weights,
    collapse with the full (possibly degenerate) sector projector, evolve
    through the stepwise propagator, and read a final sector by the Born
    rule. Samples are partitioned over seeded streams in fixed blocks; the
    result is independent of the worker count.
    """
    if n_samples < 1:
        raise ValueError(f"need at least one sample, got {n_samples}")
    if beta < 0.0:
        raise ValueError(f"beta must be nonnegative, got {beta!r}")
    init, fin, p_init, cond = _sector_tables(schedule, beta, policy=policy)
    e_init = np.array([s.energy for s in init])
    e_fin = np.array([s.energy for s in fin])
    cdf_init = cdf_of(p_init)
    cdf_rows = np.vstack([cdf_of(row) for row in cond])

    def run_block(block: tuple[int, int, int]) -> list[WorkSample]:
        stream, start, count = block
        rng = stream_generator(seed, stream)
        us = np.maximum(rng.random((count, 2)), 1e-300)
        i_idx = draw_indices(cdf_init, us[:, 0])
        rows = cdf_rows[i_idx]
        f_idx = np.argmax(us[:, 1][:, None] <= rows, axis=1)
        return [
            WorkSample(
                initial_energy=float(e_init[i]),
                final_energy=float(e_fin[f]),
                initial_outcome_index=int(i),
                final_outcome_index=int(f),
                stream_id=stream,
                draw_id=start + k,
            )
            for k, (i, f) in enumerate(zip(i_idx, f_idx))
        ]

    out: list[WorkSample] = []
    for chunk in map_streams(run_block, stream_blocks(n_samples), workers):
        out.extend(chunk)
    return out


def jarzynski_exact(
    schedule: DriveSchedule,
    beta: float,
    *,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> float:
    """<exp(-beta W)> by exact enumeration of TPM outcome pairs.

    sum_{i,f} (exp(-beta E_i)/Z_0) tr[P_f U P_i U^dag] exp(-beta (E_f - E_i)),
    which unitarity collapses to exp(-beta dF) up to rounding for any step
    count.
    """
    if beta < 0.0:
        raise ValueError(f"beta must be nonnegative, got {beta!r}")
    init = energy_sectors(schedule.initial_hamiltonian(), policy=policy)
    fin = energy_sectors(schedule.final_hamiltonian(), policy=policy)
    log_z0 = _log_partition(schedule.initial_hamiltonian(), beta)
    u = schedule.total_propagator()
    total = 0.0
    for si in init:
        conjugated = u @ si.projector.matrix @ u.conj().T
        for sf in fin:
            overlap = float(np.trace(sf.projector.matrix @ conjugated).real)
            total += (
                math.exp(-beta * si.energy - log_z0)
                * overlap
                * math.exp(-beta * (sf.energy - si.energy))
            )
    return total


def jarzynski_time_ordered(
    schedule: DriveSchedule,
    beta: float,
    *,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> float:
    """<exp(-beta W)> from the time-ordered product of per-step factors.

    Builds the cumulative propagators U(t_n), conjugates each step
    Hamiltonian into the Heisenberg picture, multiplies the split factors
    exp(-beta H_H(t_{n+1})) exp(+beta H_H(t_n)) with later steps to the
    left, and traces against the initial thermal state. Independent of
    `jarzynski_exact` as a code path; the two agree to rounding.
    """
    if beta < 0.0:
        raise ValueError(f"beta must be nonnegative, got {beta!r}")
    n = schedule.n_steps
    dim = schedule.dim
    cumulative = [np.eye(dim, dtype=complex)]
    for step in schedule.step_propagators():
        cumulative.append(step @ cumulative[-1])

    def heisenberg(k: int) -> np.ndarray:
        u = cumulative[k]
        return u.conj().T @ schedule.hamiltonian_matrix(k) @ u

    def herm_exp(m: np.ndarray, scale: float) -> np.ndarray:
        w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
        return (v * np.exp(scale * w)) @ v.conj().T

    product = np.eye(dim, dtype=complex)
    for k in range(n):
        product = herm_exp(heisenberg(k + 1), -beta) @ herm_exp(heisenberg(k), +beta) @ product
    rho0 = thermal_state(schedule.initial_hamiltonian(), beta, policy=policy)
    return float(np.trace(product @ rho0.matrix).real)


def _mean_and_se(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(values))
    if values.size < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.size))


def _works_array(samples) -> np.ndarray:
    """Accept WorkSample sequences or plain arrays of work values."""
    if len(samples) and isinstance(samples[0], WorkSample):
        return np.array([s.work for s in samples])
    return np.asarray(samples, dtype=float)


def jarzynski_equality_check(
    samples: Sequence[WorkSample] | np.ndarray,
    beta: float,
    delta_f: float,
) -> JarzynskiReport:
    """Compare the sample mean of exp(-beta W) against exp(-beta dF).

    Accepts WorkSample sequences or a plain array of work values. Passes when
    the deviation is within three standard errors.
    """
    if not len(samples):
        raise ValueError("cannot check the equality on an empty sample set")
    works = _works_array(samples)
    vals = np.exp(-beta * works)
    mean, se = _mean_and_se(vals)
    exact = math.exp(-beta * delta_f)
    mean_work, _ = _mean_and_se(works)
    return JarzynskiReport(
        estimator_mean=mean,
        standard_error=se,
        exact_value=exact,
        delta_f=delta_f,
        sample_count=len(samples),
        beta=beta,
        passed=abs(mean - exact) <= 3.0 * se,
        mean_work=mean_work,
    )


def modified_jarzynski_check(
    samples: Sequence[WorkSample] | np.ndarray,
    beta: float,
    delta_f: float,
    sigma_total: float = 3.0,
) -> JarzynskiReport:
    """Equality with the counter-factor exp(+sigma_total) for samples whose
    work already carries the injected event-reading amounts.

    Also reports the inequality <W_total> >= dF + sigma_total k_B T (with
    k_B T = 1/beta), allowing a three-standard-error statistical margin.
    """
    if not len(samples):
        raise ValueError("cannot check the equality on an empty sample set")
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    works = _works_array(samples)
    vals = np.exp(-beta * works + sigma_total)
    mean, se = _mean_and_se(vals)
    exact = math.exp(-beta * delta_f)
    mean_work, se_work = _mean_and_se(works)
    floor = delta_f + sigma_total / beta
    return JarzynskiReport(
        estimator_mean=mean,
        standard_error=se,
        exact_value=exact,
        delta_f=delta_f,
        sample_count=len(samples),
        beta=beta,
        passed=abs(mean - exact) <= 3.0 * se,
        mean_work=mean_work,
        work_floor=floor,
        inequality_ok=mean_work >= floor - 3.0 * se_work,
        sigma_total=sigma_total,
    )
