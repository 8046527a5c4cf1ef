import math

import numpy as np
import pytest

from helpers import random_unitary
from meterwork.errors import SchemeConstraintError
from meterwork.jarzynski import delta_F, tpm_sample
from meterwork.linalg import DensityMatrix, Operator, partial_trace
from meterwork.measurement import EntropyLedger
from meterwork.scheme import (
    APPARATUS,
    EXPERIMENTER,
    MEASURED,
    METER,
    POINTER,
    READER,
    SYSTEM,
    SchemeConfig,
    apply_barrier_drive,
    apply_event_reading,
    apply_meter_entangling,
    apply_nonselective_measurement,
    build_context,
    controlled_shift_entangler,
    prepare_initial_state,
    read_energy,
    run_scheme,
    run_single,
    site_diagonal_schedule,
    site_observable,
    szilard_schedule,
    verify_unitary_roundtrips,
)
from meterwork.streams import stream_generator
from meterwork.superselection import energy_sectors


@pytest.fixture(scope="module")
def ctx():
    return build_context(SchemeConfig(n_samples=10, seed=0))


def s_marginal(ctx, state) -> np.ndarray:
    return partial_trace(state, ctx.space, (SYSTEM, APPARATUS)).matrix


def system_marginal(ctx, state) -> np.ndarray:
    return partial_trace(state, ctx.space, (SYSTEM,)).matrix


class TestPrepare:
    def test_meter_side_is_pure(self, ctx):
        rho = prepare_initial_state(ctx)
        m = partial_trace(rho, ctx.space, (METER, POINTER)).matrix
        purity = float(np.trace(m @ m).real)
        assert abs(purity - 1.0) <= 1e-12

    def test_measured_side_is_gibbs(self, ctx):
        rho = prepare_initial_state(ctx)
        sa = s_marginal(ctx, rho)
        w = np.linalg.eigvalsh(sa)
        h_eigs = np.linalg.eigvalsh(ctx.h_initial.matrix)
        beta = ctx.config.beta
        gibbs = np.exp(-beta * h_eigs) / np.exp(-beta * h_eigs).sum()
        np.testing.assert_allclose(np.sort(w), np.sort(gibbs), atol=1e-12)

    def test_product_structure(self, ctx):
        rho = prepare_initial_state(ctx)
        sa = s_marginal(ctx, rho)
        m = partial_trace(rho, ctx.space, (METER, POINTER)).matrix
        np.testing.assert_allclose(rho.matrix, np.kron(sa, m), atol=1e-12)

    def test_energy_sectors_carry_apparatus_degeneracy(self, ctx):
        sectors = energy_sectors(ctx.h_initial)
        assert [s.degeneracy for s in sectors] == [4, 4]

    def test_sector_collapse_leaves_apparatus_maximally_mixed(self, ctx):
        # the collapsed energy eigenstate is a uniform classical mixture of
        # the apparatus cells contributing to that energy
        rho = prepare_initial_state(ctx)
        rng = stream_generator(8, 0)
        _, _, state, _ = read_energy(ctx, rho, "initial", rng, EntropyLedger())
        apparatus = partial_trace(state, ctx.space, (APPARATUS,)).matrix
        np.testing.assert_allclose(apparatus, np.eye(4) / 4, atol=1e-12)


class TestBarrierDrive:
    def test_slow_ramp_leaves_balanced_superposition(self, ctx):
        # start from the collapsed ground sector, as in a real run
        rho = prepare_initial_state(ctx)
        rng = stream_generator(1, 0)
        _, _, state, _ = read_energy(ctx, rho, "initial", rng, EntropyLedger())
        # force the ground branch for determinism
        ground = energy_sectors(ctx.h_initial)[0]
        sectors = ctx.initial_pset
        g_idx = int(np.argmin([abs(l - ground.energy) for l in sectors.labels]))
        p = sectors.projectors[g_idx].matrix
        m = p @ prepare_initial_state(ctx).matrix @ p
        state = DensityMatrix(0.5 * (m + m.conj().T) / np.trace(m).real, 1.0)

        driven = apply_barrier_drive(ctx, state)
        sys_red = system_marginal(ctx, driven)
        assert abs(sys_red[0, 1]) >= 0.49

        # independent oracle: 100x finer stepping of the same control path
        sched = ctx.config.barrier_schedule
        fine = szilard_schedule(n_steps=4000)
        u = np.eye(2, dtype=complex)
        dt = fine.t_f / fine.n_steps
        for n in range(fine.n_steps):
            w, v = np.linalg.eigh(fine.hamiltonian_matrix(n))
            u = (v * np.exp(-1j * w * dt)) @ v.conj().T @ u
        plus = np.array([1.0, 1.0]) / math.sqrt(2.0)
        oracle = np.outer(u @ plus, (u @ plus).conj())
        np.testing.assert_allclose(sys_red, oracle, atol=1e-3)
        assert sched.n_steps < fine.n_steps  # genuinely coarser path under test

    def test_zero_length_schedule_is_identity(self):
        cfg = SchemeConfig(
            barrier_schedule=szilard_schedule(t_f=0.0, n_steps=1), n_samples=1
        )
        ctx0 = build_context(cfg)
        rho = prepare_initial_state(ctx0)
        out = apply_barrier_drive(ctx0, rho)
        np.testing.assert_allclose(out.matrix, rho.matrix, atol=1e-13)

    def test_apparatus_untouched(self, ctx):
        rho = prepare_initial_state(ctx)
        before = partial_trace(rho, ctx.space, (APPARATUS,)).matrix
        after = partial_trace(apply_barrier_drive(ctx, rho), ctx.space, (APPARATUS,)).matrix
        np.testing.assert_allclose(after, before, atol=1e-12)


class TestNonselectiveStep:
    def test_site_eigenstate_fixed_point(self):
        cfg = SchemeConfig(eigenstate_prep=True, n_samples=1)
        ctx_e = build_context(cfg)
        rho = prepare_initial_state(ctx_e)
        before = system_marginal(ctx_e, rho)
        after = system_marginal(ctx_e, apply_nonselective_measurement(ctx_e, rho))
        np.testing.assert_allclose(after, before, atol=1e-12)

    def test_balanced_superposition_becomes_classical(self, ctx):
        rho = prepare_initial_state(ctx)
        driven = apply_barrier_drive(ctx, rho)
        out = apply_nonselective_measurement(ctx, driven)
        sys_red = system_marginal(ctx, out)
        np.testing.assert_allclose(sys_red, np.diag(np.diagonal(sys_red)), atol=1e-12)
        np.testing.assert_allclose(
            np.diagonal(sys_red).real, [0.5, 0.5], atol=1e-12
        )

    def test_site_populations_preserved(self, ctx, rng):
        rho = apply_barrier_drive(ctx, prepare_initial_state(ctx))
        before = np.diagonal(system_marginal(ctx, rho)).real
        after = np.diagonal(
            system_marginal(ctx, apply_nonselective_measurement(ctx, rho))
        ).real
        np.testing.assert_allclose(after, before, atol=1e-12)


class TestEntanglingStep:
    def _post_nsm_state(self, ctx):
        return apply_nonselective_measurement(
            ctx, apply_barrier_drive(ctx, prepare_initial_state(ctx))
        )

    def test_measured_marginal_invariant(self, ctx):
        state = self._post_nsm_state(ctx)
        before = s_marginal(ctx, state)
        after = s_marginal(ctx, apply_meter_entangling(ctx, state))
        assert np.max(np.abs(before - after)) <= 1e-12

    def test_joint_sector_correlation_is_diagonal(self, ctx):
        state = apply_meter_entangling(ctx, self._post_nsm_state(ctx))
        for n in range(2):
            site = np.zeros((2, 2))
            site[n, n] = 1.0
            for m in range(2):
                meter = np.zeros((2, 2))
                meter[m, m] = 1.0
                joint = np.kron(
                    np.kron(site, np.eye(4)), np.kron(meter, np.eye(4))
                )
                p = float(np.trace(joint @ state.matrix).real)
                site_only = np.kron(np.kron(site, np.eye(4)), np.eye(8))
                p_site = float(np.trace(site_only @ state.matrix).real)
                want = p_site if m == n else 0.0
                assert p == pytest.approx(want, abs=1e-12)

    def test_identity_entangler_is_noop(self):
        cfg = SchemeConfig(entangler=Operator.identity(4), n_samples=1)
        ctx_i = build_context(cfg)
        state = apply_nonselective_measurement(
            ctx_i, apply_barrier_drive(ctx_i, prepare_initial_state(ctx_i))
        )
        out = apply_meter_entangling(ctx_i, state)
        np.testing.assert_allclose(out.matrix, state.matrix, atol=1e-13)

    def test_random_violating_unitaries_rejected(self, ctx, rng):
        state = self._post_nsm_state(ctx)
        rejected = 0
        trials = 25
        for _ in range(trials):
            bad = Operator(random_unitary(rng, 4), unitary=True)
            cfg = SchemeConfig(entangler=bad, n_samples=1)
            bad_ctx = build_context(cfg)
            try:
                apply_meter_entangling(bad_ctx, state)
            except SchemeConstraintError:
                rejected += 1
        assert rejected == trials


class TestEventReadingStep:
    def _entangled_state(self, ctx):
        return apply_meter_entangling(
            ctx,
            apply_nonselective_measurement(
                ctx, apply_barrier_drive(ctx, prepare_initial_state(ctx))
            ),
        )

    def test_deterministic_branch_reads_free(self):
        cfg = SchemeConfig(eigenstate_prep=True, n_samples=1)
        ctx_e = build_context(cfg)
        state = apply_meter_entangling(
            ctx_e,
            apply_nonselective_measurement(
                ctx_e, apply_barrier_drive(ctx_e, prepare_initial_state(ctx_e))
            ),
        )
        outcome, _, ledger = apply_event_reading(
            ctx_e, state, stream_generator(0, 0), EntropyLedger()
        )
        assert outcome == 0
        assert all(e.sigma_nats == 0.0 for e in ledger.entries)

    def test_symmetric_branches_sample_evenly(self, ctx):
        state = self._entangled_state(ctx)
        rng = stream_generator(17, 0)
        n = 2000
        counts = np.zeros(2)
        for _ in range(n):
            outcome, _, _ = apply_event_reading(ctx, state, rng, EntropyLedger())
            counts[outcome] += 1
        se = math.sqrt(0.25 / n)
        assert abs(counts[0] / n - 0.5) <= 4 * se

    def test_collapse_propagates_to_measured_side(self, ctx):
        state = self._entangled_state(ctx)
        pre = s_marginal(ctx, state)
        outcome, collapsed, ledger = apply_event_reading(
            ctx, state, stream_generator(3, 0), EntropyLedger()
        )
        post = s_marginal(ctx, collapsed)
        site = np.zeros((2, 2))
        site[outcome, outcome] = 1.0
        proj = np.kron(site, np.eye(4))
        want = proj @ pre @ proj
        want /= np.trace(want).real
        np.testing.assert_allclose(post, want, atol=1e-12)
        totals = ledger.totals()
        assert totals[READER] == 1.0 and totals[MEASURED] == -1.0


class TestRunScheme:
    def test_ledger_per_run_totals(self):
        result = run_scheme(SchemeConfig(n_samples=200, seed=5))
        for record in result.records:
            totals = record.ledger.totals()
            assert totals[EXPERIMENTER] == 2.0
            assert totals[READER] == 1.0
            assert totals[MEASURED] == -3.0
            assert record.ledger.total() == 0.0

    def test_work_accounting_identity(self):
        result = run_scheme(SchemeConfig(n_samples=300, seed=6))
        for record in result.records:
            assert record.work_total == record.work_drive + 3.0
        assert abs(result.work_gap - 3.0) <= 1e-12
        assert result.sigma_total == 3.0

    def test_reports_pass_on_default_drive(self):
        result = run_scheme(SchemeConfig(n_samples=4000, seed=21))
        assert result.original_report.passed
        assert result.modified_report.passed
        assert result.modified_report.inequality_ok

    def test_eigenstate_prep_reduces_to_plain_tpm(self):
        result = run_scheme(SchemeConfig(n_samples=100, seed=2, eigenstate_prep=True))
        assert result.sigma_total == 0.0
        for record in result.records:
            assert all(e.sigma_nats == 0.0 for e in record.ledger.entries)
            assert record.work_drive == 0.0
            assert record.work_total == 0.0
        assert result.original_report.estimator_mean == 1.0
        # with nothing injected the two reports coincide
        assert result.modified_report.estimator_mean == result.original_report.estimator_mean
        assert result.modified_report.standard_error == result.original_report.standard_error
        assert result.modified_report.exact_value == result.original_report.exact_value
        assert result.modified_report.passed and result.original_report.passed

    def test_delta_f_ignores_apparatus_padding(self):
        cfg = SchemeConfig(n_samples=1)
        ctx = build_context(cfg)
        sched = cfg.barrier_schedule
        df_s0 = delta_F(sched.initial_hamiltonian(), sched.final_hamiltonian(), cfg.beta)
        assert ctx.delta_f == pytest.approx(df_s0, abs=1e-12)

    def test_commuting_drive_invariance_of_drive_work(self):
        # when the drive commutes with the measured observable, the
        # measurement steps leave the drive-work distribution unchanged
        beta = 1.0
        sched = site_diagonal_schedule(gap_initial=1.0, gap_final=2.0, t_f=1.0, n_steps=5)
        result = run_scheme(
            SchemeConfig(barrier_schedule=sched, n_samples=20000, seed=31, beta=beta)
        )
        scheme_works = np.array([r.work_drive for r in result.records])
        plain = tpm_sample(sched, beta, 20000, seed=77)
        plain_works = np.array([s.work for s in plain])
        np.testing.assert_allclose(
            np.unique(scheme_works), np.unique(plain_works), atol=1e-12
        )
        diff = scheme_works.mean() - plain_works.mean()
        se = math.sqrt(
            scheme_works.var(ddof=1) / len(scheme_works)
            + plain_works.var(ddof=1) / len(plain_works)
        )
        assert abs(diff) <= 3 * se

    def test_table_and_stepwise_paths_agree(self):
        cfg = SchemeConfig(n_samples=5, seed=77)
        result = run_scheme(cfg)
        ctx = build_context(cfg)
        rng = stream_generator(77, 0)
        for record in result.records:
            manual = run_single(ctx, rng, keep_states=False)
            assert manual.tpm_initial == record.tpm_initial
            assert manual.event_outcome == record.event_outcome
            assert manual.tpm_final == record.tpm_final
            assert manual.work_drive == record.work_drive
            assert manual.work_total == record.work_total
            assert [
                (e.party, e.sigma_nats, e.cause) for e in manual.ledger.entries
            ] == [(e.party, e.sigma_nats, e.cause) for e in record.ledger.entries]

    def test_worker_count_invariance(self):
        a = run_scheme(SchemeConfig(n_samples=9000, seed=13, workers=1))
        b = run_scheme(SchemeConfig(n_samples=9000, seed=13, workers=8))
        assert [(r.tpm_initial, r.event_outcome, r.tpm_final) for r in a.records] == [
            (r.tpm_initial, r.event_outcome, r.tpm_final) for r in b.records
        ]

    def test_records_carry_branch_states(self):
        result = run_scheme(SchemeConfig(n_samples=3, seed=1))
        for record in result.records:
            assert set(record.states) >= {
                "prepared",
                "after_tpm_initial",
                "after_barrier",
                "after_nonselective",
                "after_entangle",
                "after_event",
            }
            assert record.states["after_event"].dim == 64


class TestRoundTrips:
    def test_default_configuration_passes(self):
        report = verify_unitary_roundtrips(SchemeConfig(n_samples=1, seed=4), seed=9)
        assert report.all_passed
        assert [s.name for s in report.stages] == ["a", "b", "c", "d"]
        for stage in report.stages:
            assert stage.deviation <= 1e-12

    def test_eigenstate_configuration_passes(self):
        report = verify_unitary_roundtrips(
            SchemeConfig(n_samples=1, eigenstate_prep=True), seed=2
        )
        assert report.all_passed


class TestConfigValidation:
    def test_meter_too_small_rejected(self):
        with pytest.raises(ValueError, match="meter"):
            SchemeConfig(s0_dim=2, meter_dim=1)

    def test_entangler_dimension_checked(self):
        with pytest.raises(ValueError, match="entangler"):
            SchemeConfig(entangler=Operator.identity(3))

    def test_non_unitary_entangler_rejected(self):
        with pytest.raises(ValueError, match="unitary"):
            SchemeConfig(entangler=Operator(np.diag([1.0, 1.0, 1.0, 2.0])))

    def test_vanishing_tunneling_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            szilard_schedule(j_final=0.0)

    def test_site_observable_values(self):
        obs = site_observable(2)
        np.testing.assert_array_equal(np.diagonal(obs.matrix).real, [1.0, -1.0])

    def test_controlled_shift_requires_room(self):
        with pytest.raises(ValueError, match="record"):
            controlled_shift_entangler(3, 2)
