import numpy as np
import pytest

from lensforge.action import IntegrableActionHamiltonian
from lensforge.exceptions import ChartError, DegenerateSpectrumError
from lensforge.geometry import symplectic_defect
from lensforge.morse import MorseChart, morse_chart, sqrtm_batched

STD = IntegrableActionHamiltonian.standard(2)


@pytest.fixture(scope="module")
def chart():
    return morse_chart(STD, 0.0, radius=0.45)


def test_sqrtm_batched_squares_back():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(5, 3, 3)) * 0.1 + np.eye(3)
    R = sqrtm_batched(A)
    np.testing.assert_allclose(R @ R, A, atol=1e-13)


def test_index_and_closed_form_coordinate(chart):
    assert chart.index == 1
    chart = MorseChart(STD, radius=0.65)
    P = chart.P(np.array([[0.6]]), 0.0)[0, 0]
    assert abs(P - np.sqrt(1 - np.sqrt(1 - 0.36))) <= 1e-12
    assert abs(chart.P(np.array([[-0.6]]), 0.0)[0, 0] + P) <= 1e-12


def test_completion_near_centre(chart):
    w = chart.forward(np.array([[0.3, 1e-4]]), 0.0)
    assert abs(w[0, 0] - np.sqrt(2) * 0.3) <= 1e-6
    assert np.all(chart.forward(np.array([[0.0, 0.2]]), 0.0)[:, 0] == 0.0)


def test_normal_form_residual_and_round_trip(chart):
    rng = np.random.default_rng(0)
    h = rng.uniform(-0.03, 0.03, 100)
    p = rng.uniform(-0.4, 0.4, (100, 1))
    assert chart.normal_form_residual(p, h) <= 1e-9
    z = np.concatenate([rng.uniform(-1, 1, (100, 1)), p], -1)
    np.testing.assert_allclose(chart.inverse(chart.forward(z, h), h), z, atol=1e-12)


def test_chart_change_symplectic(chart):
    rng = np.random.default_rng(2)
    step = 1e-5
    for z, h in zip(np.concatenate([rng.uniform(-1, 1, (100, 1)), rng.uniform(-0.4, 0.4, (100, 1))], -1),
                    rng.uniform(-0.03, 0.03, 100)):
        cols = [(chart.forward(z + step * e, h) - chart.forward(z - step * e, h))[0] / (2 * step)
                for e in np.eye(2)]
        assert symplectic_defect(np.stack(cols, -1)) <= 1e-9


def test_action_primitive(chart):
    z = np.array([[0.2, 0.3]])
    step = 1e-6
    w = chart.forward(z, 0.0)
    for e in np.eye(2):
        wp, wm = chart.forward(z + step * e, 0.0), chart.forward(z - step * e, 0.0)
        dS = (MorseChart.action(z + step * e, wp) - MorseChart.action(z - step * e, wm)) / (2 * step)
        lhs = w[0, 1] * (wp - wm)[0, 0] / (2 * step) - z[0, 1] * e[0]
        assert abs(dS[0] - lhs) <= 1e-8


def test_three_dof_index_and_residual():
    H3 = IntegrableActionHamiltonian(3, [(1.0, (0, 0, 1)), (0.5, (2, 0, 0)), (-0.3, (0, 2, 0)),
                                         (0.1, (1, 1, 0)), (0.5, (0, 0, 2))])
    ch = MorseChart(H3, radius=0.2)
    assert ch.index == 1 and list(ch.signs) == [1.0, -1.0]
    rng = np.random.default_rng(3)
    assert ch.normal_form_residual(rng.uniform(-0.12, 0.12, (50, 2)), 0.0) <= 1e-9


def test_errors(chart):
    with pytest.raises(ChartError):
        chart.P(np.array([[0.9]]), 0.0)
    degenerate = IntegrableActionHamiltonian(3, [(1.0, (0, 0, 1)), (0.5, (2, 0, 0)), (0.5, (0, 2, 0)),
                                                 (0.5, (0, 0, 2))])
    with pytest.raises(DegenerateSpectrumError):
        MorseChart(degenerate)
