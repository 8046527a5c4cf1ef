import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import random_density, random_hermitian
from meterwork.linalg import DensityMatrix, Ket, Operator, ProjectorSet
from meterwork.superselection import (
    build_planck_basis,
    dephase,
    energy_sectors,
    sector_projector_set,
)


class TestPlanckBasis:
    def test_redefined_variables_commute_exactly(self):
        basis = build_planck_basis(3, 4, widths=(0.5, 2.0))
        q = basis.position_operator().matrix
        p = basis.momentum_operator().matrix
        comm = q @ p - p @ q
        assert np.all(comm == 0.0)

    def test_single_cell_projector_is_identity(self):
        basis = build_planck_basis(1, 1)
        assert np.array_equal(basis.cells[0].projector.matrix, np.eye(1))

    def test_two_by_two_construction(self):
        basis = build_planck_basis(2, 2)
        projs = [c.projector.matrix for c in basis.cells]
        assert len(projs) == 4
        for i, p in enumerate(projs):
            assert np.trace(p).real == 1.0  # rank one
            for q in projs[i + 1 :]:
                assert np.max(np.abs(p @ q)) == 0.0  # mutually orthogonal
        np.testing.assert_array_equal(sum(projs), np.eye(4))

    def test_nonpositive_widths_rejected(self):
        with pytest.raises(ValueError, match="widths"):
            build_planck_basis(2, 2, widths=(0.0, 1.0))

    def test_projector_set_roundtrip(self):
        pset = build_planck_basis(2, 3).projector_set()
        assert len(pset) == 6 and pset.dim == 6


def _two_sector_set() -> ProjectorSet:
    p0 = np.zeros((4, 4))
    p0[0, 0] = p0[1, 1] = 1.0
    p1 = np.eye(4) - p0
    return ProjectorSet(
        (Operator(p0, projector=True), Operator(p1, projector=True)), ("low", "high")
    )


class TestDephase:
    def test_block_diagonal_fixed_point(self, rng):
        sectors = _two_sector_set()
        block = np.zeros((4, 4), dtype=complex)
        block[:2, :2] = random_density(rng, 2).matrix * 0.4
        block[2:, 2:] = random_density(rng, 2).matrix * 0.6
        rho = DensityMatrix(block)
        out = dephase(rho, sectors)
        np.testing.assert_allclose(out.matrix, rho.matrix, atol=1e-14)

    def test_plus_state_with_z_sectors(self):
        plus = DensityMatrix.from_ket(Ket.normalized([1, 1]))
        z_set = ProjectorSet(
            (
                Operator(np.diag([1.0, 0.0]), projector=True),
                Operator(np.diag([0.0, 1.0]), projector=True),
            )
        )
        out = dephase(plus, z_set)
        np.testing.assert_allclose(out.matrix, np.diag([0.5, 0.5]), atol=1e-15)

    def test_matches_projector_sum_oracle(self, rng):
        sectors = _two_sector_set()
        rho = random_density(rng, 4)
        out = dephase(rho, sectors)
        oracle = np.zeros((4, 4), dtype=complex)
        for p in sectors.projectors:
            oracle += p.matrix @ rho.matrix @ p.matrix
        np.testing.assert_allclose(out.matrix, oracle, atol=1e-14)
        # off-block entries exactly zero, blocks equal the input blocks
        assert np.all(out.matrix[:2, 2:] == 0.0)
        assert np.all(out.matrix[2:, :2] == 0.0)
        np.testing.assert_allclose(out.matrix[:2, :2], rho.matrix[:2, :2], atol=0)

    def test_incomplete_set_rejected(self, rng):
        p0 = Operator(np.diag([1.0, 0.0, 0.0, 0.0]), projector=True)
        p1 = Operator(np.diag([0.0, 1.0, 0.0, 0.0]), projector=True)
        with pytest.raises(ValueError, match="identity"):
            ProjectorSet((p0, p1))

    @given(seed=st.integers(0, 2**32 - 1))
    def test_idempotent_and_population_preserving(self, seed):
        gen = np.random.default_rng(seed)
        sectors = _two_sector_set()
        rho = random_density(gen, 4)
        once = dephase(rho, sectors)
        twice = dephase(once, sectors)
        np.testing.assert_allclose(twice.matrix, once.matrix, atol=1e-12)
        for p in sectors.projectors:
            before = float(np.trace(p.matrix @ rho.matrix @ p.matrix).real)
            after = float(np.trace(p.matrix @ once.matrix @ p.matrix).real)
            assert after == pytest.approx(before, abs=1e-13)

    def test_trace_weight_preserved(self, rng):
        rho = random_density(rng, 4).scaled(0.5)
        out = dephase(rho, _two_sector_set())
        assert out.trace_weight == 0.5


class TestEnergySectors:
    def test_exact_degeneracy(self):
        h = Operator.from_diagonal([0.0, 0.0, 1.0])
        sectors = energy_sectors(h, grouping_tol=1e-9)
        assert [(s.energy, s.degeneracy) for s in sectors] == [(0.0, 2), (1.0, 1)]

    def test_identity_single_sector(self):
        sectors = energy_sectors(Operator.identity(4))
        assert len(sectors) == 1 and sectors[0].degeneracy == 4
        np.testing.assert_allclose(sectors[0].projector.matrix, np.eye(4), atol=1e-12)

    def test_sector_count_matches_reference_eigensolve(self, rng):
        h = random_hermitian(rng, 6)
        w = np.linalg.eigvalsh(h)
        min_gap = np.min(np.diff(w))
        sectors = energy_sectors(Operator(h, hermitian=True), grouping_tol=min_gap / 10)
        assert len(sectors) == len(np.unique(w))

    def test_projectors_commute_with_h(self, rng):
        h = random_hermitian(rng, 5)
        for s in energy_sectors(Operator(h, hermitian=True)):
            comm = s.projector.matrix @ h - h @ s.projector.matrix
            assert np.max(np.abs(comm)) <= 1e-10

    def test_completeness_and_rank(self, rng):
        h = np.kron(random_hermitian(rng, 2), np.eye(3))  # 3-fold degenerate pairs
        sectors = energy_sectors(Operator(h, hermitian=True))
        assert all(s.degeneracy == 3 for s in sectors)
        total = sum(s.projector.matrix for s in sectors)
        np.testing.assert_allclose(total, np.eye(6), atol=1e-12)
        for s in sectors:
            rank = round(float(np.trace(s.projector.matrix).real))
            assert rank == s.degeneracy

    def test_sector_projector_set_labels(self):
        h = Operator.from_diagonal([0.0, 1.0, 1.0])
        pset = sector_projector_set(energy_sectors(h))
        assert pset.labels == (0.0, 1.0)
