import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ncpflow.constitutive import FluidParams, MediumParams, capillary_pressure, mobility
from ncpflow.discretization import (
    SECONDS_PER_YEAR,
    BoundarySpec,
    Grid,
    StepProblem,
    assemble_jacobian,
    assemble_residual,
    dense_jacobian,
    face_fluxes,
    flatten_state,
    stored_mass,
    unflatten_state,
)
from ncpflow.errors import DomainError
from ncpflow.verification import compare_jacobians, fd_jacobian, fd_steps, random_admissible_state

MEDIUM = MediumParams()
FLUID = FluidParams()
DT = 5000 * SECONDS_PER_YEAR


def uniform(n, s=1.0, p=1e6, c=0.0):
    return flatten_state(np.full(n, s), np.full(n, p), np.full(n, c))


def test_grid():
    g = Grid(200, 200.0)
    assert g.dx == 1.0
    assert g.cell_centers[0] == 0.5 and g.cell_centers[-1] == 199.5
    assert Grid(1, 1.0).dx == 1.0
    with pytest.raises(ValueError):
        Grid(0, 1.0)
    with pytest.raises(ValueError):
        Grid(2.5, 1.0)


def test_year_is_julian():
    assert SECONDS_PER_YEAR == 365.25 * 86400


@given(st.integers(2, 40).flatmap(lambda n: hnp.arrays(np.float64, 3 * n, elements=st.floats(-1e7, 1e7))))
def test_flatten_round_trip(x):
    s, p, c = unflatten_state(x)
    assert flatten_state(s, p, c).tobytes() == x.tobytes()


class TestStationaryStates:
    @pytest.mark.parametrize("c", [0.0, 1e-5])
    def test_equilibrium_is_a_root(self, c):
        grid = Grid(10, 10.0)
        x = uniform(10, c=c)
        H, F, G = assemble_residual(x, x, DT, grid, MEDIUM, FLUID, BoundarySpec())
        assert np.all(H == 0.0)
        assert np.all(F == 0.0)
        assert np.all(G >= 0.0)

    def test_initial_state_complementarity_value(self):
        grid = Grid(4, 4.0)
        x = uniform(4)
        _, _, G = assemble_residual(x, x, DT, grid, MEDIUM, FLUID, BoundarySpec())
        np.testing.assert_allclose(G, FLUID.H * 1e6)

    def test_henry_equilibrium_zeroes_g(self):
        rng = np.random.default_rng(0)
        s = rng.uniform(0.6, 1.0, 8)
        p = rng.uniform(5e5, 2e6, 8)
        pc, _ = capillary_pressure(s, MEDIUM)
        c = FLUID.H * (p + pc) / FLUID.rho_l
        x = flatten_state(s, p, c)
        _, _, G = assemble_residual(x, x, DT, Grid(8, 8.0), MEDIUM, FLUID, BoundarySpec())
        assert np.abs(G).max() <= 1e-15 * FLUID.H * (p + pc).max()

    def test_saturated_f_is_zero(self):
        rng = np.random.default_rng(1)
        x = flatten_state(np.ones(5), rng.uniform(9e5, 1.1e6, 5), rng.uniform(0, 1e-5, 5))
        _, F, _ = assemble_residual(x, x, DT, Grid(5, 5.0), MEDIUM, FLUID, BoundarySpec())
        assert np.all(F == 0.0)


class TestFluxes:
    def test_darcy_two_cells(self):
        grid = Grid(2, 2.0)
        x = flatten_state(np.array([0.7, 0.7]), np.array([2e6, 1e6]), np.zeros(2))
        fw, fh = face_fluxes(x, grid, MEDIUM, FLUID, BoundarySpec(p_right=1e6))
        kl, _ = mobility("liquid", 0.7, MEDIUM, FLUID)
        expected = MEDIUM.K * kl * 1e6 / grid.dx * FLUID.rho_l
        assert fw[1] == pytest.approx(expected, rel=1e-14)
        assert fw[1] > 0

    def test_no_gas_flux_when_saturated(self):
        grid = Grid(2, 2.0)
        x = flatten_state(np.ones(2), np.array([3e6, 1e6]), np.zeros(2))
        _, fh = face_fluxes(x, grid, MEDIUM, FLUID, BoundarySpec())
        assert fh[1] == 0.0  # no dissolved hydrogen, no gas mobility

    def test_equal_pressures_no_flux(self):
        grid = Grid(3, 3.0)
        x = uniform(3, s=0.8, c=1e-6)
        fw, fh = face_fluxes(x, grid, MEDIUM, FLUID, BoundarySpec(p_right=1e6))
        assert fw[1] == 0.0 and fw[2] == 0.0

    def test_diffusion_hand_value_water_basis(self):
        fluid = FluidParams(diffusion_basis="water")
        grid = Grid(2, 2.0)
        x = flatten_state(np.ones(2), np.full(2, 1e6), np.array([1.53e-5, 0.0]))
        fw, fh = face_fluxes(x, grid, MEDIUM, fluid, BoundarySpec())
        expected = MEDIUM.phi * fluid.M_h * (fluid.rho_l / fluid.M_w) * fluid.D_h_l * 1.53e-5 / grid.dx
        assert fh[1] == pytest.approx(expected, rel=1e-14)
        assert fw[1] == pytest.approx(-expected, rel=1e-14)

    def test_diffusion_uniform_chi_is_zero(self):
        grid = Grid(3, 3.0)
        x = uniform(3, c=1e-5)
        fw, fh = face_fluxes(x, grid, MEDIUM, FLUID, BoundarySpec())
        assert np.all(fh[1:3] == 0.0)

    def test_right_boundary_outflow_sign(self):
        grid = Grid(3, 3.0)
        x = uniform(3, p=1.2e6)
        fw, _ = face_fluxes(x, grid, MEDIUM, FLUID, BoundarySpec(p_right=1e6))
        expected = MEDIUM.K / FLUID.mu_l * 0.2e6 / (0.5 * grid.dx) * FLUID.rho_l
        assert fw[-1] == pytest.approx(expected, rel=1e-14)

    def test_inflow_ghost_carries_no_hydrogen(self):
        grid = Grid(3, 3.0)
        x = uniform(3, p=0.9e6, c=1e-5)
        _, fh = face_fluxes(x, grid, MEDIUM, FLUID, BoundarySpec(p_right=1e6))
        # liquid enters from the right with chi = 0; diffusion pulls hydrogen out
        assert fh[-1] > 0


class TestBalanceRows:
    def test_left_flux_enters_first_cell(self):
        grid = Grid(4, 4.0)
        x = uniform(4)
        q = 1e-13
        H0, _, _ = assemble_residual(x, x, DT, grid, MEDIUM, FLUID, BoundarySpec())
        H1, _, _ = assemble_residual(x, x, DT, grid, MEDIUM, FLUID, BoundarySpec(q_h_in=q))
        assert H1[1] - H0[1] == pytest.approx(-q / grid.dx, rel=1e-12)
        np.testing.assert_array_equal(H1[2:], H0[2:])

    def test_uniform_pair_accumulation(self):
        # both cells identical and at the boundary pressure: only the left influx moves mass
        grid = Grid(2, 2.0)
        q = 1.7e-13
        x_old = uniform(2, c=2e-6)
        x_new = flatten_state(np.ones(2), np.full(2, 1e6), np.array([3e-6, 3e-6]))
        H, _, _ = assemble_residual(x_new, x_old, DT, grid, MEDIUM, FLUID, BoundarySpec(q_h_in=q))
        m_new = MEDIUM.phi * FLUID.rho_l * 3e-6
        m_old = MEDIUM.phi * FLUID.rho_l * 2e-6
        assert H[1] == pytest.approx((m_new - m_old) / DT - q / grid.dx, rel=1e-12)

    def test_single_cell_oracle(self):
        grid = Grid(1, 0.5)
        q = 1e-13
        x_old = flatten_state(np.ones(1), np.full(1, 1e6), np.full(1, 2e-6))
        x_new = flatten_state(np.ones(1), np.full(1, 1e6), np.full(1, 3e-6))
        H, _, _ = assemble_residual(x_new, x_old, 1e11, grid, MEDIUM, FLUID, BoundarySpec(q_h_in=q))
        # hand value: 0.15 * 1e3 * 1e-6 / 1e11 - 1e-13 / 0.5
        assert H[1] == pytest.approx(1.5e-15 - 2e-13, rel=1e-12)
        assert H[0] == 0.0

    @given(st.integers(0, 2**32 - 1))
    def test_conservation_telescopes(self, seed):
        rng = np.random.default_rng(seed)
        n = 12
        grid = Grid(n, 30.0)
        x = random_admissible_state(rng, n)
        x_old = random_admissible_state(rng, n)
        bc = BoundarySpec(q_h_in=rng.uniform(0, 1e-12), p_right=rng.uniform(5e5, 5e6))
        H, _, _ = assemble_residual(x, x_old, DT, grid, MEDIUM, FLUID, bc)
        fw, fh = face_fluxes(x, grid, MEDIUM, FLUID, bc)
        w1, h1 = stored_mass(x, grid, MEDIUM, FLUID)
        w0, h0 = stored_mass(x_old, grid, MEDIUM, FLUID)
        for rows, m1, m0, f in ((H[0::2], w1, w0, fw), (H[1::2], h1, h0, fh)):
            lhs = rows.sum() * grid.dx
            rhs = (m1 - m0) / DT - (f[0] - f[-1])
            scale = max(abs((m1 - m0) / DT), abs(f[0]), abs(f[-1]), np.abs(f).max())
            assert abs(lhs - rhs) <= 1e-12 * scale

    def test_domain_error_names_cell(self):
        x = uniform(4)
        x[3 * 2] = 0.3
        with pytest.raises(DomainError) as exc:
            assemble_residual(x, uniform(4), DT, Grid(4, 4.0), MEDIUM, FLUID, BoundarySpec())
        assert exc.value.cell == 2

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        x, xo = random_admissible_state(rng, 20), random_admissible_state(rng, 20)
        a = assemble_residual(x, xo, DT, Grid(20, 20.0), MEDIUM, FLUID, BoundarySpec())
        b = assemble_residual(x, xo, DT, Grid(20, 20.0), MEDIUM, FLUID, BoundarySpec())
        for u, v in zip(a, b):
            assert u.tobytes() == v.tobytes()


class TestJacobian:
    def setup_method(self):
        rng = np.random.default_rng(11)
        self.n = 8
        self.grid = Grid(self.n, 8.0)
        self.x = random_admissible_state(rng, self.n)
        self.x_old = random_admissible_state(rng, self.n)
        self.bc = BoundarySpec(q_h_in=1e-13)

    def test_f_rows(self):
        _, Fp, _ = assemble_jacobian(self.x, self.x_old, DT, self.grid, MEDIUM, FLUID, self.bc)
        np.testing.assert_array_equal(Fp, np.tile([-1.0, 0.0, 0.0], (self.n, 1)))

    def test_block_tridiagonal_sparsity(self):
        J = dense_jacobian(*assemble_jacobian(self.x, self.x_old, DT, self.grid, MEDIUM, FLUID, self.bc))
        n = self.n
        for i in range(n):
            for j in range(n):
                if abs(i - j) > 1:
                    assert np.all(J[2 * i:2 * i + 2, 3 * j:3 * j + 3] == 0.0)
                if i != j:
                    assert np.all(J[2 * n + i, 3 * j:3 * j + 3] == 0.0)
                    assert np.all(J[3 * n + i, 3 * j:3 * j + 3] == 0.0)

    def test_matches_finite_differences(self):
        prob = StepProblem(self.x_old, DT, self.grid, MEDIUM, FLUID, self.bc, 1e6)

        def fun(z):
            return np.concatenate(assemble_residual(z, self.x_old, DT, self.grid, MEDIUM, FLUID, self.bc))

        A = dense_jacobian(*assemble_jacobian(self.x, self.x_old, DT, self.grid, MEDIUM, FLUID, self.bc))
        D = fd_jacobian(fun, self.x, fd_steps(self.n))
        rows = np.concatenate([prob.h_scale, prob.phi_scale, prob.phi_scale])
        cols = np.tile(prob.var_scale, self.n)
        d = compare_jacobians(A / rows[:, None] * cols, D / rows[:, None] * cols)
        assert d.max_rel_error <= 1e-6


class TestStepProblem:
    def test_block_solver_matches_dense(self):
        rng = np.random.default_rng(2)
        n = 6
        grid = Grid(n, 6.0)
        x = random_admissible_state(rng, n)
        prob = StepProblem(x, DT, grid, MEDIUM, FLUID, BoundarySpec(q_h_in=1e-13), 1e6)
        H, F, G = prob.residuals(x)
        Hp, Fp, Gp = prob.jacobians(x)
        J_phi = np.zeros((n, 3 * n))
        for i in range(n):
            J_phi[i, 3 * i:3 * i + 3] = Gp[i] if i % 2 else Fp[i]
        rhs_phi = -np.where(np.arange(n) % 2, G, F)
        dx_block = prob.solve_newton(Hp, np.array([J_phi[i, 3 * i:3 * i + 3] for i in range(n)]), -H, rhs_phi)
        M = np.vstack([Hp.to_dense(), J_phi])
        dx_dense = np.linalg.solve(M, np.concatenate([-H, rhs_phi]))
        np.testing.assert_allclose(dx_block, dx_dense, rtol=1e-8, atol=1e-12 * np.abs(dx_dense).max())
