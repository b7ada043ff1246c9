import math

import numpy as np
import pytest

from sgcrl_lab.dynamics import (
    ClaimTolerances,
    compute_stats,
    equilibrium_report,
    init_lemma1,
    init_theorem_dynamics,
    run_dynamics,
    write_dynamics_csv,
)


class TestTheoremInit:
    def test_projection_exactly_equalized(self):
        st = init_theorem_dynamics(32, 48, c=0.6, seed=0)
        cu = st.U @ st.z
        cv = st.V @ st.z
        assert np.abs(cu - 0.6).max() < 1e-12
        assert np.abs(cv - 0.6).max() < 1e-12
        norms = np.linalg.norm(st.table.vectors, axis=1)
        assert np.abs(norms - 1.0).max() < 1e-12

    def test_zero_common_component(self):
        st = init_theorem_dynamics(32, 64, c=0.0, seed=1)
        assert np.abs(st.U @ st.z).max() < 1e-12

    def test_matched_residuals_orthogonal_at_start(self):
        st = init_theorem_dynamics(32, 64, c=0.5, seed=2)
        stats = compute_stats(st)
        assert abs(stats.alpha) < 1e-12
        assert stats.c_spread < 1e-12

    def test_initial_cross_terms_bounded(self):
        # Monte-Carlo bound on the worst Gaussian cross inner product: the max
        # over the ~12k residual pairs at d=128 concentrates near 0.37 (frozen
        # from the oracle run over these 8 seeds; 0.45 leaves margin)
        for seed in range(8):
            st = init_theorem_dynamics(64, 128, c=0.0, seed=seed)
            assert compute_stats(st).lambda_max < 0.45

    def test_rejects_degenerate_c(self):
        with pytest.raises(ValueError):
            init_theorem_dynamics(16, 32, c=1.0, seed=0)
        with pytest.raises(ValueError):
            init_theorem_dynamics(16, 32, c=-1.5, seed=0)


class TestLemmaInit:
    def test_single_positive_structure(self):
        st = init_lemma1(16, 64, positives_per_anchor=1, seed=0)
        assert st.n_anchors == 16 and st.n_slots == 16
        assert abs(compute_stats(st).alpha) < 0.2  # independent Gaussians

    def test_bundled_anchors_duplicated(self):
        st = init_lemma1(16, 64, positives_per_anchor=2, seed=0)
        assert st.n_anchors == 8
        u = st.U
        assert np.array_equal(u[0::2], u[1::2])

    def test_rejects_unsupported_k(self):
        with pytest.raises(ValueError):
            init_lemma1(16, 64, positives_per_anchor=3, seed=0)
        with pytest.raises(ValueError):
            init_lemma1(15, 64, positives_per_anchor=2, seed=0)


class TestRunDynamics:
    def test_alpha_non_decreasing_after_first_step(self):
        st = init_theorem_dynamics(48, 64, c=0.5, seed=0)
        series = run_dynamics(st, eta=0.01, steps=400)
        alphas = [s.alpha for s in series[1:]]
        diffs = np.diff(alphas)
        assert (diffs >= -1e-6).all()

    def test_common_component_decays(self):
        st = init_theorem_dynamics(64, 96, c=0.6, seed=1)
        series = run_dynamics(st, eta=0.01, steps=1500)
        assert series[-1].c_max < 0.05
        assert series[-1].alignment > 0.99

    def test_forward_direction_reaches_same_verdicts(self):
        tol = ClaimTolerances(terminal_c=0.05, alignment=0.95, cross=0.12)
        verdicts = {}
        for direction in ("backward", "forward"):
            st = init_theorem_dynamics(64, 96, c=0.5, seed=3)
            series = run_dynamics(st, eta=0.01, steps=1500, loss_direction=direction)
            rep = equilibrium_report(series, tolerances=tol)
            verdicts[direction] = {
                k: v for k, v in rep.claims.items()
                if k != "shared_projection_equal_across_rows"
            }
        assert verdicts["backward"] == verdicts["forward"]

    def test_bundled_run_tracks_beta(self):
        st = init_lemma1(32, 64, positives_per_anchor=2, seed=0)
        series = run_dynamics(st, eta=0.02, steps=800)
        assert not math.isnan(series[-1].beta)
        assert series[-1].beta > series[1].beta

    def test_zero_steps_echoes_initial_stats(self):
        st = init_theorem_dynamics(16, 32, c=0.4, seed=0)
        series = run_dynamics(st, eta=0.01, steps=0)
        assert len(series) == 1 and series[0].step == 0
        rep = equilibrium_report(series)
        assert not rep.converged
        assert set(rep.claims.values()) == {"not_converged"}

    def test_rejects_bad_args(self):
        st = init_theorem_dynamics(16, 32, c=0.4, seed=0)
        with pytest.raises(ValueError):
            run_dynamics(st, eta=0.0, steps=10)
        with pytest.raises(ValueError):
            run_dynamics(st, eta=0.01, steps=10, loss_direction="sideways")

    def test_kernel_and_reference_updates_agree_on_dynamics(self):
        # one step of the table engine against a direct matrix restatement
        st = init_theorem_dynamics(24, 32, c=0.5, seed=4)
        u0 = st.U.copy()
        v0 = st.V.copy()
        eta = 0.01
        logits = u0 @ v0.T
        e = np.exp(logits - logits.max(axis=0, keepdims=True))
        p = e / e.sum(axis=0, keepdims=True)
        delta = np.eye(24)
        u1 = u0 + eta * (delta - p) @ v0
        v1 = v0 + eta * (delta - p).T @ u0
        u1 /= np.linalg.norm(u1, axis=1, keepdims=True)
        v1 /= np.linalg.norm(v1, axis=1, keepdims=True)
        run_dynamics(st, eta=eta, steps=1)
        assert np.abs(st.U - u1).max() < 1e-12
        assert np.abs(st.V - v1).max() < 1e-12


class TestReportAndCsv:
    def test_csv_round_trips_columns(self, tmp_path):
        st = init_theorem_dynamics(16, 32, c=0.4, seed=0)
        series = run_dynamics(st, eta=0.01, steps=5)
        path = write_dynamics_csv(series, tmp_path / "series.csv")
        header = path.read_text().splitlines()[0].split(",")
        assert header[:8] == [
            "step", "c_mean", "c_max", "alpha", "beta", "lambda_max", "r", "alignment"
        ]
        assert len(path.read_text().splitlines()) == len(series) + 1

    def test_empty_series_rejected(self):
        with pytest.raises(ValueError):
            equilibrium_report([])
