"""End-to-end five-step measurement protocol on a four-factor composite.

Subsystems, in fixed tensor order:

* ``system``    -- the measured two-site degree of freedom (left/right);
* ``apparatus`` -- the coarse-grained cell pointer that performs the
                   non-selective step (it dephases the system but, being
                   translation-invariant, records nothing readable);
* ``meter``     -- the event-reading meter;
* ``pointer``   -- the reading-side grid the meter couples to in the final
                   step.

The drive raises a barrier between the two sites (the opening move of a
Szilard engine): the tunneling amplitude decreases with the control value,
and the symmetric ground state stays an equal superposition of the sites.

The protocol per run: projective energy reading of the measured side
(experimenter), barrier drive, non-selective site measurement, a controlled
shift correlating site with meter (required to leave the measured side's
marginal untouched), meter-pointer coupling plus event reading, and a final
energy reading. Each generic reading books the (+1, -1) nat pair; the
work it carries, k_B T per nat, is injected as deterministic additive
accounting on top of the drive work.

Runs are table-driven: the deterministic channels are evaluated once per
branch and sampling reduces to three inverse-CDF draws per run, which keeps
10^4 runs cheap while remaining bit-identical to the stepwise path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SchemeConstraintError
from .jarzynski import (
    DriveSchedule,
    JarzynskiReport,
    delta_F,
    jarzynski_equality_check,
    modified_jarzynski_check,
    thermal_state,
)
from .linalg import (
    CompositeSpace,
    DensityMatrix,
    Ket,
    Operator,
    ProjectorSet,
    embed_operator,
    partial_trace,
)
from .measurement import (
    ENERGY_EVENT_READING,
    EVENT_READING,
    EntropyLedger,
    PointerModel,
    born_probabilities,
    event_read,
    nonselective_measure,
    pointer_coupling_unitary,
)
from .numeric import DEFAULT_POLICY, NumericPolicy
from .streams import cdf_of, draw_index, map_streams, stream_blocks, stream_generator
from .superselection import dephase, energy_sectors, sector_projector_set

__all__ = [
    "SYSTEM",
    "APPARATUS",
    "METER",
    "POINTER",
    "EXPERIMENTER",
    "READER",
    "MEASURED",
    "site_observable",
    "barrier_hamiltonian",
    "szilard_schedule",
    "site_diagonal_schedule",
    "controlled_shift_entangler",
    "SchemeConfig",
    "SchemeContext",
    "build_context",
    "prepare_initial_state",
    "read_energy",
    "apply_barrier_drive",
    "apply_nonselective_measurement",
    "apply_meter_entangling",
    "apply_event_reading",
    "run_single",
    "run_scheme",
    "SchemeRunRecord",
    "SchemeResult",
    "StageResult",
    "RoundTripReport",
    "verify_unitary_roundtrips",
]

SYSTEM = "system"
APPARATUS = "apparatus"
METER = "meter"
POINTER = "pointer"

EXPERIMENTER = "experimenter"
READER = "reader"
MEASURED = "measured"


def site_observable(dim: int = 2) -> Operator:
    """Which-site observable with integer-spaced eigenvalues (dim-1, dim-3, ...).

    Integer spacing keeps every pointer shift commensurate with a unit grid.
    """
    return Operator.from_diagonal(np.array([dim - 1 - 2 * k for k in range(dim)], dtype=float))


def site_projector_set(dim: int = 2) -> ProjectorSet:
    """Site-basis sectors labeled 0..dim-1 in basis order."""
    projs = []
    for k in range(dim):
        m = np.zeros((dim, dim))
        m[k, k] = 1.0
        projs.append(Operator(m, projector=True))
    return ProjectorSet(tuple(projs), tuple(range(dim)))


def barrier_hamiltonian(tunneling: float) -> Operator:
    """Two-site tight-binding pair with tunneling amplitude J: -J sigma_x."""
    return Operator(
        np.array([[0.0, -tunneling], [-tunneling, 0.0]], dtype=complex), hermitian=True
    )


def szilard_schedule(
    j_initial: float = 1.0,
    j_final: float = 0.25,
    t_f: float = 2.0,
    n_steps: int = 40,
) -> DriveSchedule:
    """Barrier-raising drive: tunneling ramps linearly from j_initial down to
    j_final, partitioning the box while the symmetric ground state stays an
    equal left/right superposition."""
    if not (j_initial > 0.0 and j_final > 0.0):
        raise ValueError("tunneling amplitudes must stay positive")

    def h_at(lam: float) -> Operator:
        return barrier_hamiltonian(j_initial + (j_final - j_initial) * lam)

    return DriveSchedule.linear(h_at, t_f, n_steps)


def site_diagonal_schedule(
    gap_initial: float = 1.0,
    gap_final: float = 1.0,
    t_f: float = 1.0,
    n_steps: int = 1,
) -> DriveSchedule:
    """Site-diagonal drive diag(0, gap(lambda)): commutes with the which-site
    observable, so site eigenstates stay energy eigenstates throughout."""

    def h_at(lam: float) -> Operator:
        return Operator.from_diagonal(
            np.array([0.0, gap_initial + (gap_final - gap_initial) * lam])
        )

    return DriveSchedule.linear(h_at, t_f, n_steps)


def controlled_shift_entangler(n_branches: int, meter_dim: int) -> Operator:
    """Unitary sum_k |site_k><site_k| (x) shift^k on the meter ring.

    Maps |site_k>|meter_0> to |site_k>|meter_k| without touching the measured
    side. Needs meter_dim >= n_branches for distinct meter records.
    """
    if meter_dim < n_branches:
        raise ValueError(
            f"meter dimension {meter_dim} cannot record {n_branches} distinct branches"
        )
    u = np.zeros((n_branches * meter_dim, n_branches * meter_dim), dtype=complex)
    for k in range(n_branches):
        sel = np.zeros((n_branches, n_branches))
        sel[k, k] = 1.0
        shift = np.roll(np.eye(meter_dim), k, axis=0)
        u += np.kron(sel, shift)
    return Operator(u, unitary=True)


@dataclass(frozen=True)
class SchemeConfig:
    """Knobs of one protocol family; None fields get the default build.

    With ``eigenstate_prep`` the measured side starts in its ground energy
    sector under a site-diagonal constant drive, so every reading is
    deterministic and books 0 nats.
    """

    beta: float = 1.0
    s0_dim: int = 2
    meter_dim: int = 2
    n_samples: int = 1000
    seed: int = 0
    barrier_schedule: DriveSchedule | None = None
    nsm_pointer: PointerModel | None = None
    entangler: Operator | None = None
    event_pointer: PointerModel | None = None
    eigenstate_prep: bool = False
    workers: int | None = None

    def __post_init__(self):
        if self.beta <= 0.0:
            raise ValueError(f"beta must be positive, got {self.beta!r}")
        if self.meter_dim < self.s0_dim:
            raise ValueError("meter must have at least one level per site outcome")
        if self.barrier_schedule is None:
            default = (
                site_diagonal_schedule() if self.eigenstate_prep else szilard_schedule()
            )
            object.__setattr__(self, "barrier_schedule", default)
        if self.barrier_schedule.dim != self.s0_dim:
            raise ValueError(
                f"drive dimension {self.barrier_schedule.dim} != system dimension {self.s0_dim}"
            )
        if self.nsm_pointer is None:
            object.__setattr__(self, "nsm_pointer", PointerModel(4))
        if self.event_pointer is None:
            object.__setattr__(self, "event_pointer", PointerModel(4))
        if self.entangler is None:
            object.__setattr__(
                self, "entangler", controlled_shift_entangler(self.s0_dim, self.meter_dim)
            )
        if self.entangler.dim != self.s0_dim * self.meter_dim:
            raise ValueError(
                f"entangler dimension {self.entangler.dim} != "
                f"system x meter dimension {self.s0_dim * self.meter_dim}"
            )
        Operator(self.entangler.matrix, unitary=True)  # asserted, not trusted


@dataclass(frozen=True)
class SchemeContext:
    """Precomputed operators of one configuration (all immutable)."""

    config: SchemeConfig
    space: CompositeSpace
    observable: Operator
    h_initial: Operator
    h_final: Operator
    initial_pset: ProjectorSet
    final_pset: ProjectorSet
    barrier_unitary: np.ndarray
    nsm_unitary: np.ndarray
    nsm_dephase_set: ProjectorSet
    entangler_full: np.ndarray
    event_unitary_m: np.ndarray
    event_unitary: np.ndarray
    event_dephase_set: ProjectorSet
    meter_outcome_set: ProjectorSet
    meter_ready: Ket
    pointer_ready: Ket
    delta_f: float
    kT: float
    policy: NumericPolicy = DEFAULT_POLICY


def _basis_projectors(dim: int, labels=None) -> ProjectorSet:
    projs = []
    for k in range(dim):
        m = np.zeros((dim, dim))
        m[k, k] = 1.0
        projs.append(Operator(m, projector=True))
    return ProjectorSet(tuple(projs), labels)


def build_context(config: SchemeConfig, *, policy: NumericPolicy = DEFAULT_POLICY) -> SchemeContext:
    cfg = config
    space = CompositeSpace(
        [
            (SYSTEM, cfg.s0_dim),
            (APPARATUS, cfg.nsm_pointer.pointer_dim),
            (METER, cfg.meter_dim),
            (POINTER, cfg.event_pointer.pointer_dim),
        ]
    )
    obs = site_observable(cfg.s0_dim)
    aprime_dim = cfg.nsm_pointer.pointer_dim
    h0 = Operator(
        np.kron(cfg.barrier_schedule.initial_hamiltonian().matrix, np.eye(aprime_dim)),
        hermitian=True,
    )
    hf = Operator(
        np.kron(cfg.barrier_schedule.final_hamiltonian().matrix, np.eye(aprime_dim)),
        hermitian=True,
    )
    initial_pset = sector_projector_set(energy_sectors(h0, policy=policy)).embedded(
        space, (SYSTEM, APPARATUS)
    )
    final_pset = sector_projector_set(energy_sectors(hf, policy=policy)).embedded(
        space, (SYSTEM, APPARATUS)
    )

    barrier_u = embed_operator(
        Operator(cfg.barrier_schedule.total_propagator(), unitary=True, policy=policy),
        space,
        (SYSTEM,),
        policy=policy,
    ).matrix
    nsm_u = embed_operator(
        pointer_coupling_unitary(obs, cfg.nsm_pointer, policy=policy),
        space,
        (SYSTEM, APPARATUS),
        policy=policy,
    ).matrix

    site_cells = []
    site_cell_labels = []
    for k in range(cfg.s0_dim):
        for c in range(aprime_dim):
            m = np.zeros((cfg.s0_dim * aprime_dim, cfg.s0_dim * aprime_dim))
            m[k * aprime_dim + c, k * aprime_dim + c] = 1.0
            site_cells.append(Operator(m, projector=True))
            site_cell_labels.append((k, c))
    nsm_dephase = ProjectorSet(tuple(site_cells), tuple(site_cell_labels)).embedded(
        space, (SYSTEM, APPARATUS)
    )

    entangler_full = embed_operator(cfg.entangler, space, (SYSTEM, METER), policy=policy).matrix

    meter_obs = Operator.from_diagonal(np.arange(cfg.meter_dim, dtype=float))
    event_u_m = pointer_coupling_unitary(meter_obs, cfg.event_pointer, policy=policy)
    event_u = embed_operator(event_u_m, space, (METER, POINTER), policy=policy).matrix

    pdim = cfg.event_pointer.pointer_dim
    meter_cells = []
    meter_cell_labels = []
    for m_idx in range(cfg.meter_dim):
        for c in range(pdim):
            mm = np.zeros((cfg.meter_dim * pdim, cfg.meter_dim * pdim))
            mm[m_idx * pdim + c, m_idx * pdim + c] = 1.0
            meter_cells.append(Operator(mm, projector=True))
            meter_cell_labels.append((m_idx, c))
    event_dephase = ProjectorSet(tuple(meter_cells), tuple(meter_cell_labels)).embedded(
        space, (METER, POINTER)
    )
    meter_outcomes = _basis_projectors(cfg.meter_dim).embedded(space, (METER,))

    return SchemeContext(
        config=cfg,
        space=space,
        observable=obs,
        h_initial=h0,
        h_final=hf,
        initial_pset=initial_pset,
        final_pset=final_pset,
        barrier_unitary=barrier_u,
        nsm_unitary=nsm_u,
        nsm_dephase_set=nsm_dephase,
        entangler_full=entangler_full,
        event_unitary_m=event_u_m.matrix,
        event_unitary=event_u,
        event_dephase_set=event_dephase,
        meter_outcome_set=meter_outcomes,
        meter_ready=Ket.basis(cfg.meter_dim, 0),
        pointer_ready=cfg.event_pointer.ready_state(),
        delta_f=delta_F(h0, hf, cfg.beta),
        kT=1.0 / cfg.beta,
        policy=policy,
    )


def _conjugate(state: DensityMatrix, u: np.ndarray, policy: NumericPolicy) -> DensityMatrix:
    m = u @ state.matrix @ u.conj().T
    m = 0.5 * (m + m.conj().T)
    tr = float(np.trace(m).real)
    m *= state.trace_weight / tr
    return DensityMatrix(m, state.trace_weight, policy=policy)


def prepare_initial_state(ctx: SchemeContext) -> DensityMatrix:
    """Measured side thermal (or its ground sector under eigenstate
    preparation), meter in its ready eigenstate, pointer at the grid origin;
    the whole state is the product."""
    cfg = ctx.config
    rho_sa = thermal_state(ctx.h_initial, cfg.beta, policy=ctx.policy)
    if cfg.eigenstate_prep:
        ground = energy_sectors(ctx.h_initial, policy=ctx.policy)[0].projector.matrix
        m = ground @ rho_sa.matrix @ ground
        m = 0.5 * (m + m.conj().T)
        rho_sa = DensityMatrix(m / np.trace(m).real, 1.0, policy=ctx.policy)
    meter = np.outer(ctx.meter_ready.amplitudes, ctx.meter_ready.amplitudes.conj())
    pointer = np.outer(ctx.pointer_ready.amplitudes, ctx.pointer_ready.amplitudes.conj())
    full = np.kron(rho_sa.matrix, np.kron(meter, pointer))
    return DensityMatrix(full, 1.0, policy=ctx.policy)


def read_energy(
    ctx: SchemeContext,
    state: DensityMatrix,
    which: str,
    rng: np.random.Generator,
    ledger: EntropyLedger,
) -> tuple[int, float, DensityMatrix, EntropyLedger]:
    """Projective energy reading of the measured side by the experimenter.

    Dephases into the (possibly degenerate) energy sectors, then samples one;
    returns (sector index, energy, collapsed state, extended ledger).
    """
    pset = ctx.initial_pset if which == "initial" else ctx.final_pset
    dephased = nonselective_measure(state, pset, policy=ctx.policy)
    label, collapsed, ledger = event_read(
        dephased,
        pset,
        rng,
        ledger,
        MEASURED,
        EXPERIMENTER,
        cause=ENERGY_EVENT_READING,
        policy=ctx.policy,
    )
    return pset.labels.index(label), float(label), collapsed, ledger


def apply_barrier_drive(ctx: SchemeContext, state: DensityMatrix) -> DensityMatrix:
    """Stepwise unitary drive of the system factor only."""
    return _conjugate(state, ctx.barrier_unitary, ctx.policy)


def apply_nonselective_measurement(ctx: SchemeContext, state: DensityMatrix) -> DensityMatrix:
    """Couple the system to the apparatus cells, then dephase in the joint
    site (x) cell sectors; the system marginal loses its site coherence while
    every site population is untouched."""
    coupled = _conjugate(state, ctx.nsm_unitary, ctx.policy)
    return dephase(coupled, ctx.nsm_dephase_set, policy=ctx.policy)


def apply_meter_entangling(ctx: SchemeContext, state: DensityMatrix) -> DensityMatrix:
    """Correlate site sectors with meter levels.

    The marginal of the measured side must come out exactly as it went in;
    an entangler violating that requirement is rejected.
    """
    before = partial_trace(state, ctx.space, (SYSTEM, APPARATUS), policy=ctx.policy)
    out = _conjugate(state, ctx.entangler_full, ctx.policy)
    after = partial_trace(out, ctx.space, (SYSTEM, APPARATUS), policy=ctx.policy)
    deviation = float(np.max(np.abs(before.matrix - after.matrix)))
    if deviation > ctx.policy.marginal_tol:
        raise SchemeConstraintError(
            f"entangling step changed the measured side's marginal by {deviation:.3e}"
        )
    return out


def apply_event_reading(
    ctx: SchemeContext,
    state: DensityMatrix,
    rng: np.random.Generator,
    ledger: EntropyLedger,
) -> tuple[int, DensityMatrix, EntropyLedger]:
    """Meter-pointer coupling, sector dephasing, then the event reading.

    The meter outcome collapse propagates to the measured side through the
    correlation set up by the entangling step; the ledger gains the
    (+1, -1) nat pair unless the outcome was deterministic.
    """
    coupled = _conjugate(state, ctx.event_unitary, ctx.policy)
    dephased = dephase(coupled, ctx.event_dephase_set, policy=ctx.policy)
    label, collapsed, ledger = event_read(
        dephased,
        ctx.meter_outcome_set,
        rng,
        ledger,
        MEASURED,
        READER,
        cause=EVENT_READING,
        policy=ctx.policy,
    )
    return int(label), collapsed, ledger


@dataclass(frozen=True)
class SchemeRunRecord:
    """One protocol run: outcomes, works, entropy pairs, and branch states."""

    tpm_initial: tuple[int, float]
    tpm_final: tuple[int, float]
    event_outcome: int
    work_drive: float
    work_reading_experimenter: float
    work_reading_reader: float
    ledger: EntropyLedger
    stream_id: int = 0
    draw_id: int = 0
    states: dict[str, DensityMatrix] | None = None
    work_total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self,
            "work_total",
            self.work_drive + self.work_reading_experimenter + self.work_reading_reader,
        )


def run_single(
    ctx: SchemeContext,
    rng: np.random.Generator,
    *,
    keep_states: bool = True,
    stream_id: int = 0,
    draw_id: int = 0,
) -> SchemeRunRecord:
    """One full run, executed step by step (three Born draws from `rng`)."""
    ledger = EntropyLedger()
    prepared = prepare_initial_state(ctx)
    i_idx, e_i, state, ledger = read_energy(ctx, prepared, "initial", rng, ledger)
    after_initial = state
    state = apply_barrier_drive(ctx, state)
    after_barrier = state
    state = apply_nonselective_measurement(ctx, state)
    after_nsm = state
    state = apply_meter_entangling(ctx, state)
    after_ent = state
    outcome, state, ledger = apply_event_reading(ctx, state, rng, ledger)
    after_event = state
    f_idx, e_f, state, ledger = read_energy(ctx, state, "final", rng, ledger)

    totals = ledger.totals()
    w_exp = ctx.kT * totals.get(EXPERIMENTER, 0.0)
    w_reader = ctx.kT * totals.get(READER, 0.0)
    states = None
    if keep_states:
        states = {
            "prepared": prepared,
            "after_tpm_initial": after_initial,
            "after_barrier": after_barrier,
            "after_nonselective": after_nsm,
            "after_entangle": after_ent,
            "after_event": after_event,
            "final": state,
        }
    return SchemeRunRecord(
        tpm_initial=(i_idx, e_i),
        tpm_final=(f_idx, e_f),
        event_outcome=outcome,
        work_drive=e_f - e_i,
        work_reading_experimenter=w_exp,
        work_reading_reader=w_reader,
        ledger=ledger,
        stream_id=stream_id,
        draw_id=draw_id,
        states=states,
    )


@dataclass(frozen=True)
class SchemeResult:
    records: tuple[SchemeRunRecord, ...]
    original_report: JarzynskiReport
    modified_report: JarzynskiReport
    delta_f: float
    sigma_total: float
    ledger_totals: dict[str, float]
    work_gap: float  # <work_total> - <work_drive>; the injected reading work


class _BranchTables:
    """Exact per-branch channel evaluation backing the sampling loop.

    Stage probabilities and collapsed states depend only on the drawn
    outcome indices, so all distinct branches are computed once with the
    same step functions the stepwise path uses.
    """

    def __init__(self, ctx: SchemeContext):
        policy = ctx.policy
        floor = policy.outcome_floor
        self.ctx = ctx
        prepared = prepare_initial_state(ctx)
        self.prepared = prepared
        dephased0 = nonselective_measure(prepared, ctx.initial_pset, policy=policy)
        self.p_init = born_probabilities(dephased0, ctx.initial_pset, policy=policy)
        self.cdf_init = cdf_of(self.p_init)
        self.sigma_initial = 1.0 if int(np.sum(self.p_init > floor)) > 1 else 0.0
        self.e_init = [float(l) for l in ctx.initial_pset.labels]
        self.e_fin = [float(l) for l in ctx.final_pset.labels]

        n_i = len(ctx.initial_pset)
        n_m = len(ctx.meter_outcome_set)
        self.states_initial: dict[int, DensityMatrix] = {}
        self.states_barrier: dict[int, DensityMatrix] = {}
        self.states_nsm: dict[int, DensityMatrix] = {}
        self.states_ent: dict[int, DensityMatrix] = {}
        self.states_event: dict[tuple[int, int], DensityMatrix] = {}
        self.cdf_event: dict[int, np.ndarray] = {}
        self.sigma_event: dict[int, float] = {}
        self.cdf_final: dict[tuple[int, int], np.ndarray] = {}
        self.sigma_final: dict[tuple[int, int], float] = {}

        for i in range(n_i):
            if self.p_init[i] <= floor:
                continue
            proj = ctx.initial_pset.projectors[i].matrix
            m = proj @ dephased0.matrix @ proj
            m = 0.5 * (m + m.conj().T)
            state_i = DensityMatrix(m / np.trace(m).real, 1.0, policy=policy)
            self.states_initial[i] = state_i
            state_b = apply_barrier_drive(ctx, state_i)
            self.states_barrier[i] = state_b
            state_n = apply_nonselective_measurement(ctx, state_b)
            self.states_nsm[i] = state_n
            state_e = apply_meter_entangling(ctx, state_n)
            self.states_ent[i] = state_e
            coupled = _conjugate(state_e, ctx.event_unitary, policy)
            ready = dephase(coupled, ctx.event_dephase_set, policy=policy)
            q = born_probabilities(ready, ctx.meter_outcome_set, policy=policy)
            self.cdf_event[i] = cdf_of(q)
            self.sigma_event[i] = 1.0 if int(np.sum(q > floor)) > 1 else 0.0
            for m_idx in range(n_m):
                if q[m_idx] <= floor:
                    continue
                mp = ctx.meter_outcome_set.projectors[m_idx].matrix
                mm = mp @ ready.matrix @ mp
                mm = 0.5 * (mm + mm.conj().T)
                state_v = DensityMatrix(mm / np.trace(mm).real, 1.0, policy=policy)
                self.states_event[(i, m_idx)] = state_v
                deph_f = nonselective_measure(state_v, ctx.final_pset, policy=policy)
                r = born_probabilities(deph_f, ctx.final_pset, policy=policy)
                self.cdf_final[(i, m_idx)] = cdf_of(r)
                self.sigma_final[(i, m_idx)] = 1.0 if int(np.sum(r > floor)) > 1 else 0.0

    def draw_run(
        self, rng: np.random.Generator, stream_id: int, draw_id: int
    ) -> SchemeRunRecord:
        ctx = self.ctx
        i = draw_index(self.cdf_init, float(rng.random()))
        m = draw_index(self.cdf_event[i], float(rng.random()))
        f = draw_index(self.cdf_final[(i, m)], float(rng.random()))
        s1 = self.sigma_initial
        s2 = self.sigma_event[i]
        s3 = self.sigma_final[(i, m)]
        ledger = (
            EntropyLedger()
            .with_pair(EXPERIMENTER, MEASURED, s1, ENERGY_EVENT_READING)
            .with_pair(READER, MEASURED, s2, EVENT_READING)
            .with_pair(EXPERIMENTER, MEASURED, s3, ENERGY_EVENT_READING)
        )
        states = {
            "prepared": self.prepared,
            "after_tpm_initial": self.states_initial[i],
            "after_barrier": self.states_barrier[i],
            "after_nonselective": self.states_nsm[i],
            "after_entangle": self.states_ent[i],
            "after_event": self.states_event[(i, m)],
        }
        return SchemeRunRecord(
            tpm_initial=(i, self.e_init[i]),
            tpm_final=(f, self.e_fin[f]),
            event_outcome=m,
            work_drive=self.e_fin[f] - self.e_init[i],
            work_reading_experimenter=ctx.kT * (s1 + s3),
            work_reading_reader=ctx.kT * s2,
            ledger=ledger,
            stream_id=stream_id,
            draw_id=draw_id,
            states=states,
        )


def run_scheme(config: SchemeConfig, *, policy: NumericPolicy = DEFAULT_POLICY) -> SchemeResult:
    """Run the full protocol config.n_samples times and check both equalities.

    The original check runs on the drive works; the modified check runs on
    the total works (drive plus injected reading work) with the counter
    factor exp(+sigma_total). Sampling is stream-partitioned and worker-count
    independent.
    """
    ctx = build_context(config, policy=policy)
    tables = _BranchTables(ctx)

    def run_block(block: tuple[int, int, int]) -> list[SchemeRunRecord]:
        stream, start, count = block
        rng = stream_generator(config.seed, stream)
        return [tables.draw_run(rng, stream, start + k) for k in range(count)]

    records: list[SchemeRunRecord] = []
    for chunk in map_streams(run_block, stream_blocks(config.n_samples), config.workers):
        records.extend(chunk)

    sigma_totals = {
        sum((e.sigma_nats for e in r.ledger.entries if e.sigma_nats > 0.0), 0.0)
        for r in records
    }
    if len(sigma_totals) != 1:
        raise SchemeConstraintError(
            f"entropy production differs across runs ({sorted(sigma_totals)}); "
            "the c-number counter factor is undefined"
        )
    sigma_total = sigma_totals.pop()

    drive_works = np.array([r.work_drive for r in records])
    total_works = np.array([r.work_total for r in records])
    original = jarzynski_equality_check(drive_works, config.beta, ctx.delta_f)
    modified = modified_jarzynski_check(
        total_works, config.beta, ctx.delta_f, sigma_total=sigma_total
    )

    totals: dict[str, float] = {}
    for r in records:
        for party, val in r.ledger.totals().items():
            totals[party] = totals.get(party, 0.0) + val
    work_gap = float(np.mean(total_works) - np.mean(drive_works))
    return SchemeResult(
        records=tuple(records),
        original_report=original,
        modified_report=modified,
        delta_f=ctx.delta_f,
        sigma_total=sigma_total,
        ledger_totals=totals,
        work_gap=work_gap,
    )


@dataclass(frozen=True)
class StageResult:
    name: str
    passed: bool
    deviation: float


@dataclass(frozen=True)
class RoundTripReport:
    """Branch-conditional unitary round trips through the last two steps."""

    stages: tuple[StageResult, ...]
    event_outcome: int

    @property
    def all_passed(self) -> bool:
        return all(s.passed for s in self.stages)


def _branch_unitaries(ctx: SchemeContext) -> list[np.ndarray]:
    """Per-site meter blocks V_k of a controlled entangler U = sum |k><k| (x) V_k.

    Extraction is validated against U; a non-controlled entangler fails here.
    """
    cfg = ctx.config
    d_s, d_m = cfg.s0_dim, cfg.meter_dim
    u = cfg.entangler.matrix
    blocks = []
    rebuilt = np.zeros_like(u)
    for k in range(d_s):
        block = u[k * d_m : (k + 1) * d_m, k * d_m : (k + 1) * d_m]
        blocks.append(block)
        sel = np.zeros((d_s, d_s))
        sel[k, k] = 1.0
        rebuilt += np.kron(sel, block)
    if float(np.max(np.abs(u - rebuilt))) > ctx.policy.unitary_tol:
        raise SchemeConstraintError(
            "entangler is not a site-controlled unitary; branch round trips undefined"
        )
    return blocks


def verify_unitary_roundtrips(
    config: SchemeConfig,
    seed: int = 0,
    *,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> RoundTripReport:
    """Check the branch-decoupling structure of the last two steps.

    (a) before the entangling step the two sides factor exactly;
    (b) after it, undoing each branch's meter block returns the reading side
        to its ready state while the measured side's branch is untouched;
    (c) the same holds with the meter-pointer coupling composed in;
    (d) the branch actually selected by an event reading passes the same
        round trip.
    """
    ctx = build_context(config, policy=policy)
    rng = stream_generator(seed, 0)
    tol = ctx.policy.marginal_tol
    floor = ctx.policy.outcome_floor
    ledger = EntropyLedger()

    prepared = prepare_initial_state(ctx)
    _, _, state, ledger = read_energy(ctx, prepared, "initial", rng, ledger)
    state = apply_barrier_drive(ctx, state)
    pre_entangle = apply_nonselective_measurement(ctx, state)

    m_ready = np.kron(
        np.outer(ctx.meter_ready.amplitudes, ctx.meter_ready.amplitudes.conj()),
        np.outer(ctx.pointer_ready.amplitudes, ctx.pointer_ready.amplitudes.conj()),
    )
    s_marg = partial_trace(pre_entangle, ctx.space, (SYSTEM, APPARATUS), policy=policy)
    m_marg = partial_trace(pre_entangle, ctx.space, (METER, POINTER), policy=policy)
    dev_a = float(
        np.max(np.abs(pre_entangle.matrix - np.kron(s_marg.matrix, m_marg.matrix)))
    )
    dev_a = max(dev_a, float(np.max(np.abs(m_marg.matrix - m_ready))))

    blocks = _branch_unitaries(ctx)
    pdim = ctx.config.event_pointer.pointer_dim
    site_set = site_projector_set(ctx.config.s0_dim).embedded(ctx.space, (SYSTEM,))

    def branch_roundtrip(state_full: DensityMatrix, undo_m: list[np.ndarray]) -> float:
        """Worst branch deviation of (undone M marginal vs ready, S branch vs
        its pre-entangle branch)."""
        worst = 0.0
        for k, proj in enumerate(site_set.projectors):
            p = float(np.trace(proj.matrix @ state_full.matrix).real)
            if p <= floor:
                continue
            branch = proj.matrix @ state_full.matrix @ proj.matrix / p
            branch = 0.5 * (branch + branch.conj().T)
            branch_dm = DensityMatrix(branch, 1.0, policy=policy)
            m_branch = partial_trace(branch_dm, ctx.space, (METER, POINTER), policy=policy)
            undone = undo_m[k] @ m_branch.matrix @ undo_m[k].conj().T
            worst = max(worst, float(np.max(np.abs(undone - m_ready))))

            s_branch = partial_trace(branch_dm, ctx.space, (SYSTEM, APPARATUS), policy=policy)
            ref = proj_site(k, s_marg)
            worst = max(worst, float(np.max(np.abs(s_branch.matrix - ref))))
        return worst

    def proj_site(k: int, s_state: DensityMatrix) -> np.ndarray:
        sp = site_projector_set(ctx.config.s0_dim).embedded(
            CompositeSpace([(SYSTEM, ctx.config.s0_dim), (APPARATUS, ctx.config.nsm_pointer.pointer_dim)]),
            (SYSTEM,),
        ).projectors[k].matrix
        ref = sp @ s_state.matrix @ sp
        p = float(np.trace(ref).real)
        return 0.5 * (ref + ref.conj().T) / p

    after_iv = apply_meter_entangling(ctx, pre_entangle)
    undo_b = [np.kron(v.conj().T, np.eye(pdim)) for v in blocks]
    dev_b = branch_roundtrip(after_iv, undo_b)

    after_v_unitary = _conjugate(after_iv, ctx.event_unitary, policy)
    undo_c = [np.kron(v.conj().T, np.eye(pdim)) @ ctx.event_unitary_m.conj().T for v in blocks]
    dev_c = branch_roundtrip(after_v_unitary, undo_c)

    dephased = dephase(after_v_unitary, ctx.event_dephase_set, policy=policy)
    label, collapsed, ledger = event_read(
        dephased,
        ctx.meter_outcome_set,
        rng,
        ledger,
        MEASURED,
        READER,
        policy=policy,
    )
    n0 = int(label)
    m_after = partial_trace(collapsed, ctx.space, (METER, POINTER), policy=policy)
    undone = undo_c[n0] @ m_after.matrix @ undo_c[n0].conj().T
    dev_d = float(np.max(np.abs(undone - m_ready)))
    s_after = partial_trace(collapsed, ctx.space, (SYSTEM, APPARATUS), policy=policy)
    dev_d = max(dev_d, float(np.max(np.abs(s_after.matrix - proj_site(n0, s_marg)))))

    stages = tuple(
        StageResult(name, dev <= tol, dev)
        for name, dev in (("a", dev_a), ("b", dev_b), ("c", dev_c), ("d", dev_d))
    )
    return RoundTripReport(stages=stages, event_outcome=n0)
