"""Unit tests for the grid finite-difference reference solver."""

import numpy as np
import pytest

from pdeflow import fd_reference, network, pdes
from pdeflow.dynamics import Trajectory
from pdeflow.errors import ConfigError
from pdeflow.fd_reference import discrete_energy, fd_wave_solve, grid_axes, grid_compare
from pdeflow.network import NetworkSpec


def standing_mode():
    """Product-of-sines eigenmode of the Dirichlet cube."""
    def phi0(X):
        return np.prod(np.sin(np.pi * (X + 1.0) / 2.0), axis=1)

    return phi0, lambda X: np.zeros(X.shape[0])


class TestFdWaveSolve:
    def test_zero_ic_stays_zero(self):
        zero = lambda X: np.zeros(X.shape[0])
        snaps = fd_wave_solve(16, 0.2, (zero, zero), ode_tol=1e-6, checkpoint_times=[0.1])
        assert len(snaps) == 2
        for _t, field in snaps:
            np.testing.assert_array_equal(field, np.zeros((16, 16, 16)))

    def test_standing_mode_frequency(self):
        # the separable sine mode oscillates at sqrt(3) (pi/2); match the
        # analytic field to 1e-3 at grid 64
        T = 0.5
        snaps = fd_wave_solve(64, T, standing_mode(), ode_tol=1e-6)
        t, field = snaps[-1]
        pts = fd_reference.grid_points(64)
        expected = (
            standing_mode()[0](pts).reshape(64, 64, 64) * np.cos(np.sqrt(3) * np.pi / 2 * t)
        )
        rel = np.linalg.norm(field - expected) / np.linalg.norm(expected)
        assert rel <= 1e-3
        assert np.max(np.abs(field - expected)) <= 1e-3 * np.max(np.abs(expected))

    def test_second_order_spatial_convergence(self):
        # standing-mode phase error is a clean h^2 proxy: doubling the grid
        # cuts the error by a factor in [3, 5]
        T = 0.5
        errs = []
        for n in (16, 32):
            snaps = fd_wave_solve(n, T, standing_mode(), ode_tol=1e-9)
            t, field = snaps[-1]
            pts = fd_reference.grid_points(n)
            expected = (
                standing_mode()[0](pts).reshape(n, n, n) * np.cos(np.sqrt(3) * np.pi / 2 * t)
            )
            errs.append(np.linalg.norm(field - expected) / np.linalg.norm(expected))
        factor = errs[0] / errs[1]
        assert 3.0 <= factor <= 5.0

    def test_energy_drift_small(self):
        prob = pdes.wave_problem()
        phi0 = lambda X: prob.initial_condition(X)[:, 0]
        psi0 = lambda X: prob.initial_condition(X)[:, 1]
        n = 32
        h = 2.0 / (n - 1)
        # run the same method-of-lines system directly so both fields are
        # available for the energy functional at both ends
        m = n - 2
        ax = grid_axes(n)
        interior = ax[1:-1]
        X, Y, Z = np.meshgrid(interior, interior, interior, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
        from pdeflow.integrate import DORMAND_PRINCE_45, integrate_adaptive

        size = m**3
        y0 = np.concatenate([phi0(pts), psi0(pts)])

        def rhs(t, y):
            phi = y[:size].reshape(m, m, m)
            return np.concatenate(
                [y[size:], fd_reference._laplacian_interior(phi, h).ravel()]
            )

        def energy_of(y):
            full_phi = np.zeros((n, n, n))
            full_phi[1:-1, 1:-1, 1:-1] = y[:size].reshape(m, m, m)
            full_psi = np.zeros((n, n, n))
            full_psi[1:-1, 1:-1, 1:-1] = y[size:].reshape(m, m, m)
            return discrete_energy(full_phi, full_psi, h)

        e0 = energy_of(y0)
        _t, y_end = integrate_adaptive(
            rhs, y0, 0.0, 0.5, 0.25 * h, DORMAND_PRINCE_45, atol=1e-6, rtol=1e-6
        )
        e1 = energy_of(y_end)
        assert abs(e1 - e0) / e0 <= 0.01

    def test_memory_cap(self):
        zero = lambda X: np.zeros(X.shape[0])
        with pytest.raises(ConfigError, match="memory"):
            fd_wave_solve(512, 0.1, (zero, zero), memory_cap=10**6)

    def test_grid_floor(self):
        zero = lambda X: np.zeros(X.shape[0])
        with pytest.raises(ConfigError):
            fd_wave_solve(4, 0.1, (zero, zero))


class TestGridCompare:
    def _traj_with(self, spec, theta, t=0.25):
        return Trajectory(times=[0.0, t], thetas=[theta.copy(), theta])

    def test_self_comparison_is_zero(self):
        spec = NetworkSpec(input_dim=3, output_dim=1, hidden_widths=(6,), embed_L=1)
        theta = network.init_params(spec, 0)
        n = 12
        pts = fd_reference.grid_points(n)
        snapshot = fd_reference.evaluate_network_on_grid(spec, theta, pts).reshape(n, n, n)
        disc, _field = grid_compare(self._traj_with(spec, theta), spec, snapshot, 0.25)
        assert disc <= 1e-13

    def test_zero_network_against_nonzero_field(self):
        spec = NetworkSpec(input_dim=3, output_dim=2, hidden_widths=(4,), embed_L=0)
        theta = np.zeros(spec.param_count)
        n = 10
        snapshot = np.ones((n, n, n))
        disc, _ = grid_compare(self._traj_with(spec, theta), spec, snapshot, 0.25)
        assert disc == pytest.approx(1.0)

    def test_slice_comparison(self):
        spec = NetworkSpec(input_dim=3, output_dim=1, hidden_widths=(5,), embed_L=1)
        theta = network.init_params(spec, 1)
        n = 16
        pts = fd_reference.grid_points(n)
        snapshot = fd_reference.evaluate_network_on_grid(spec, theta, pts).reshape(n, n, n)
        disc, field = grid_compare(
            self._traj_with(spec, theta), spec, snapshot, 0.25, slice_spec=(0, 0.0)
        )
        assert disc <= 1e-13
        assert field.shape == (n, n)

    def test_time_mismatch_raises(self):
        spec = NetworkSpec(input_dim=3, output_dim=1, hidden_widths=(4,), embed_L=0)
        theta = network.init_params(spec, 2)
        with pytest.raises(ConfigError, match="checkpoint"):
            grid_compare(self._traj_with(spec, theta, t=0.2), spec, np.ones((8, 8, 8)), 0.3)
