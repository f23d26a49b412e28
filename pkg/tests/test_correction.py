import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from witnesscert import qsim
from witnesscert.correction import (
    DeviceNoise,
    effective_operator,
    gamma1,
    gamma2,
    gamma2_first_order,
    perturb_distribution,
    perturb_distribution_batch,
    perturb_elements_batch,
    perturb_povm,
    witness_correction,
)
from witnesscert.errors import DomainError, InvalidModelError
from witnesscert.witness import (
    LocalObservable,
    MeasurementSetting,
    ObservableTerm,
    PovmModel,
    SettingDistribution,
    WitnessDecomposition,
    WitnessGame,
    readout_povm,
)

A_PLUS, A_MINUS = oracles.readout_values(0.95, 0.99)
EPS = 2e-3 * (abs(A_PLUS) + abs(A_MINUS))


def ghz_gamma2_oracle(eps):
    # three two-body Z terms and four three-body terms, all |w| = 1/8, unit-norm factors
    two_body = eps * (1 + (1 + eps))
    three_body = eps * (1 + (1 + eps) + (1 + eps) ** 2)
    return (3 * two_body + 4 * three_body) / 8


class TestGhzCorrection:
    def test_gamma1(self, game):
        expected = 1e-6 * (7 / 24 * 3 * A_PLUS**2 + 4 * 7 / 8 * A_PLUS**3)
        assert gamma1(game.decomp, game.dist, game.povm, 1e-6) == pytest.approx(expected, rel=1e-13)
        assert expected == pytest.approx(5.811140e-6, rel=1e-6)

    def test_gamma2(self, game):
        assert gamma2(game.decomp, game.povm, (2e-3,) * 3) == pytest.approx(ghz_gamma2_oracle(EPS), rel=1e-13)
        assert ghz_gamma2_oracle(EPS) == pytest.approx(9.608459e-3, rel=1e-6)

    def test_first_order(self, game):
        assert gamma2_first_order(game.decomp, game.povm, (2e-3,) * 3) == pytest.approx(
            (3 * 2 * EPS + 4 * 3 * EPS) / 8, rel=1e-13
        )

    def test_breakdown(self, game):
        br = witness_correction(game, DeviceNoise.uniform(1e-6, 2e-3, 3))
        assert br.gamma == pytest.approx(br.gamma1 + br.gamma2)
        assert br.gamma == pytest.approx(9.614270e-3, rel=1e-6)
        assert set(br.as_dict()) == {"gamma1", "gamma2", "gamma2_first_order", "gamma"}

    def test_zero_noise(self, game):
        assert witness_correction(game, DeviceNoise.uniform(0, 0, 3)).gamma == 0.0

    @pytest.mark.parametrize("delta", [(1e-3, 0.0, 0.0), (0.0, 0.0, 1e-3), (1e-3, 2e-3, 3e-3)])
    def test_per_subsystem_delta(self, game, delta):
        eps = [d * (abs(A_PLUS) + abs(A_MINUS)) for d in delta]
        expected = 0.0
        for t in game.decomp.terms:
            e = [b * ej for b, ej in zip(t.bitmask, eps)]
            expected += abs(t.weight) * sum(
                math.prod(1 + e[k] for k in range(j)) * e[j] for j in range(3)
            )
        assert gamma2(game.decomp, game.povm, delta) == pytest.approx(expected, rel=1e-13, abs=1e-18)

    def test_second_order_exceeds_first(self, game):
        assert gamma2(game.decomp, game.povm, (2e-3,) * 3) > gamma2_first_order(game.decomp, game.povm, (2e-3,) * 3)


class TestNonUnitFactors:
    def test_lambda_enters(self):
        # single term w * (2Z) x Z: lam = (2, 1), outcome sums (4, 2) for +-2 and +-1 readout
        big = LocalObservable("2Z", 2 * qsim.pauli("Z"))
        setting = MeasurementSetting((big, LocalObservable.pauli("Z")))
        decomp = WitnessDecomposition(2, 0.5, (ObservableTerm(0.25, 0, "11"),), (setting,))
        z = [(1.0, np.diag([1.0, 0.0])), (-1.0, np.diag([0.0, 1.0]))]
        z2 = [(2.0, np.diag([1.0, 0.0])), (-2.0, np.diag([0.0, 1.0]))]
        povm = PovmModel(((z2, z),))
        d1, d2 = 1e-2, 3e-2
        e1, e2 = d1 * 4, d2 * 2
        expected = 0.25 * (e1 * 1 + (2 + e1) * e2)
        assert gamma2(decomp, povm, (d1, d2)) == pytest.approx(expected, rel=1e-14)


class TestNoiseValidation:
    @pytest.mark.parametrize("tau,delta", [(-1e-3, (0.0,)), (math.nan, (0.0,)), (0.0, (-1e-3,)), (0.0, (math.inf,))])
    def test_invalid(self, tau, delta):
        with pytest.raises(DomainError):
            DeviceNoise(tau, delta)

    def test_tau_too_large(self, game):
        with pytest.raises(DomainError):
            witness_correction(game, DeviceNoise.uniform(1 / 7, 0.0, 3))

    def test_wrong_delta_count(self, game):
        with pytest.raises(DomainError):
            witness_correction(game, DeviceNoise(0.0, (1e-3, 1e-3)))


class TestPerturbations:
    def test_distribution_bounds(self, rng):
        p = np.array([3, 1, 1, 1, 1]) / 7
        rows = perturb_distribution_batch(p, 1e-3, 5000, rng)
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-14)
        assert np.abs(rows - p).max() <= 1e-3 + 1e-16
        assert np.abs(rows - p).max() > 5e-4

    def test_distribution_single(self, game, rng):
        q = perturb_distribution(game.dist, 1e-4, rng)
        assert q.shape == (5,) and abs(q.sum() - 1) < 1e-14

    @pytest.mark.parametrize("basis", ["X", "Y", "Z"])
    def test_element_bounds(self, basis, rng):
        (pp, pm), _ = readout_povm(0.95, 0.99, basis)
        ideal = np.array([pp, pm])
        batch = perturb_elements_batch(ideal, 2e-3, 500, rng)
        np.testing.assert_allclose(batch.sum(axis=1), np.broadcast_to(np.eye(2), (500, 2, 2)), atol=1e-14)
        dev = np.abs(np.linalg.eigvalsh(batch - ideal)).max(axis=(-1, -2))
        assert dev.max() <= 2e-3 * (1 + 1e-12)
        assert np.linalg.eigvalsh(batch)[..., 0].min() >= 0.0

    def test_rank_deficient_fails_cleanly(self, rng):
        ideal = np.array([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]).astype(complex)
        with pytest.raises(InvalidModelError):
            perturb_elements_batch(ideal, 1e-3, 4, rng, max_tries=3)


class TestEffectiveOperator:
    def test_unperturbed(self, game):
        np.testing.assert_allclose(effective_operator(game, game.dist.p, game.povm), game.witness_matrix, atol=1e-12)

    def test_rejects_bad_inputs(self, game):
        with pytest.raises(InvalidModelError):
            effective_operator(game, (0.5, 0.5), game.povm)
        with pytest.raises(InvalidModelError):
            effective_operator(game, (0.6, 0.1, 0.1, 0.1, 0.2), game.povm)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_bound_holds(self, seed):
        from witnesscert import ghz_game

        game = ghz_game()
        rng = np.random.default_rng(seed)
        noise = DeviceNoise.uniform(1e-6, 2e-3, 3)
        gamma = witness_correction(game, noise).gamma
        p = perturb_distribution(game.dist, noise.tau, rng)
        povm = perturb_povm(game.povm, noise.delta, rng)
        diff = effective_operator(game, p, povm) - game.witness_matrix
        assert qsim.operator_norm(diff) <= gamma

    def test_worst_case_single_term_is_tight(self):
        # one-qubit witness 1 - Z, perturbing P+ -> P+ + d|0><0| needs P- -> P- - d|0><0|
        decomp = WitnessDecomposition(1, 1.0, (ObservableTerm(-1.0, 0, "1"),), (MeasurementSetting.pauli("Z"),))
        d = 0.02
        ideal = [(1.0, np.diag([0.9, 0.0])), (-1.0, np.diag([0.0, 0.9])), (0.0, np.diag([0.1, 0.1]))]
        pert = [(1.0, np.diag([0.9 + d, 0.0])), (-1.0, np.diag([0.0, 0.9])), (0.0, np.diag([0.1 - d, 0.1]))]
        povm = PovmModel(((tuple((a / 0.9 if a else 0.0, e) for a, e in ideal),),))
        game = WitnessGame(decomp, povm, SettingDistribution((1.0,)))
        povm_p = PovmModel(((tuple((a / 0.9 if a else 0.0, e) for a, e in pert),),))
        diff = qsim.operator_norm(effective_operator(game, (1.0,), povm_p) - game.witness_matrix)
        bound = gamma2(decomp, povm, (d,))
        assert diff == pytest.approx(d / 0.9)
        assert diff <= bound
