import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamselect.errors import ConfigurationError, DimensionMismatchError, ParseError, UsageError
from beamselect.instance import (
    InstanceConfig,
    ProblemInstance,
    db_to_linear,
    evaluate_sinr,
    generate_instance,
    load_instance,
    robust_sinr_certificate,
    row_powers,
    row_support,
    save_instance,
    worst_case_margin,
)

from conftest import make_inst


def _sinr_loop(W, H, sigma2):
    # straight transcription of signal / (interference + noise), one user at a time
    N, M = H.shape
    out = np.zeros(M)
    for m in range(M):
        sig = abs(np.vdot(W[:, m], H[:, m])) ** 2
        intf = sum(abs(np.vdot(W[:, j], H[:, m])) ** 2 for j in range(M) if j != m)
        out[m] = sig / (intf + sigma2[m])
    return out


def test_db_conversion():
    assert db_to_linear(0.0) == 1.0
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert db_to_linear(30.0) == pytest.approx(1000.0)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        InstanceConfig.uniform(4, 2, 5)
    with pytest.raises(ConfigurationError):
        InstanceConfig.uniform(4, 2, 2, gamma=-1.0)
    with pytest.raises(ConfigurationError):
        InstanceConfig.uniform(4, 2, 2, sigma2=0.0)
    with pytest.raises(ConfigurationError):
        InstanceConfig.uniform(4, 2, 2, eps=-0.1)
    with pytest.raises(ConfigurationError):
        InstanceConfig.uniform(4, 2, 2, csi_mode="partial")
    with pytest.raises(ConfigurationError):
        InstanceConfig(4, 2, 2, (1.0,), (1.0, 1.0), (0.0, 0.0))


def test_csi_mode_defaults_from_eps():
    assert not InstanceConfig.uniform(4, 2, 2).robust
    assert InstanceConfig.uniform(4, 2, 2, eps=0.1).robust
    perfect = InstanceConfig.uniform(4, 2, 2, eps=0.1, csi_mode="perfect")
    assert np.all(perfect.eps == 0)


def test_generation_is_pure_function_of_config():
    cfg = InstanceConfig.uniform(8, 4, 4, seed=77)
    a, b = generate_instance(cfg), generate_instance(cfg)
    assert a == b
    assert generate_instance(cfg.with_seed(78)) != a


def test_channel_statistics():
    inst = make_inst(400, 50, 1, seed=1)
    H = inst.H
    assert np.mean(np.abs(H) ** 2) == pytest.approx(1.0, abs=0.02)
    assert abs(np.mean(H.real)) < 0.02 and abs(np.mean(H.imag)) < 0.02
    assert np.var(H.real) == pytest.approx(0.5, abs=0.02)


def test_channel_is_read_only():
    inst = make_inst(4, 2, 2)
    with pytest.raises(ValueError):
        inst.H[0, 0] = 0


def test_instance_shape_checked():
    cfg = InstanceConfig.uniform(4, 2, 2)
    with pytest.raises(ConfigurationError):
        ProblemInstance(cfg, np.zeros((3, 2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_sinr_matches_loop(seed):
    rng = np.random.default_rng(seed)
    inst = make_inst(5, 3, 3, seed=seed, sigma2=0.3)
    W = rng.normal(size=(5, 3)) + 1j * rng.normal(size=(5, 3))
    np.testing.assert_allclose(evaluate_sinr(W, inst), _sinr_loop(W, inst.H, inst.config.sigma2), rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 2 * math.pi))
def test_sinr_phase_invariance(seed, phi):
    rng = np.random.default_rng(seed)
    inst = make_inst(5, 3, 3, seed=seed)
    W = rng.normal(size=(5, 3)) + 1j * rng.normal(size=(5, 3))
    m = seed % 3
    W2 = W.copy()
    W2[:, m] *= np.exp(1j * phi)
    np.testing.assert_allclose(evaluate_sinr(W2, inst), evaluate_sinr(W, inst), rtol=1e-12)


def test_sinr_shape_checked():
    inst = make_inst(4, 2, 2)
    with pytest.raises(UsageError):
        evaluate_sinr(np.zeros((2, 4)), inst)


def test_row_helpers():
    W = np.array([[1 + 1j, 0], [0, 0], [0, 2]])
    np.testing.assert_allclose(row_powers(W), [2.0, 0.0, 4.0])
    assert row_support(W) == frozenset({0, 2})
    assert row_support(W, tol=3.0) == frozenset({2})


def test_certificate_requires_robust_mode():
    inst = make_inst(4, 2, 2)
    with pytest.raises(UsageError):
        robust_sinr_certificate(np.ones((4, 2)), inst, 0)


def test_certificate_eps_zero_agrees_with_sinr(rng):
    agree = 0
    for trial in range(100):
        inst = make_inst(4, 2, 2, seed=trial, csi_mode="robust", eps=0.0, gamma=1.0)
        W = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
        ok = evaluate_sinr(W, inst) >= inst.config.gamma
        agree += all(robust_sinr_certificate(W, inst, m) == ok[m] for m in range(2))
    assert agree == 100


def test_worst_case_margin_matches_sampled_channels(rng):
    # the certificate must hold for every channel in the ball; sample the boundary
    inst = make_inst(4, 2, 2, seed=5, csi_mode="robust", eps=0.05, gamma=1.0, sigma2=0.1)
    W = 3.0 * inst.H / np.linalg.norm(inst.H, axis=0)
    for m in range(2):
        margin = worst_case_margin(W, inst, m)
        Wm = np.outer(W[:, m], W[:, m].conj())
        Q = Wm / inst.config.gamma[m] - (W @ W.conj().T - Wm)
        worst = math.inf
        for _ in range(2000):
            e = rng.normal(size=4) + 1j * rng.normal(size=4)
            e *= inst.config.eps[m] / np.linalg.norm(e)
            h = inst.H[:, m] + e
            worst = min(worst, np.real(h.conj() @ Q @ h) - inst.config.sigma2[m])
        if margin >= 0:
            assert worst >= -1e-9
        if worst < 0:
            assert margin < 1e-9


def test_instance_roundtrip(tmp_path):
    inst = make_inst(6, 3, 2, seed=9, eps=0.05, gamma=2.0, sigma2=0.5)
    p = tmp_path / "i.txt"
    save_instance(inst, p)
    back = load_instance(p)
    assert back == inst


def test_instance_parse_errors(tmp_path):
    inst = make_inst(3, 2, 2, seed=1)
    p = tmp_path / "i.txt"
    save_instance(inst, p)
    lines = p.read_text().splitlines()
    bad = tmp_path / "bad.txt"
    bad.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ParseError):
        load_instance(bad)
    mangled = [ln.replace("N = 3", "N = 4") for ln in lines]
    bad.write_text("\n".join(mangled) + "\n")
    with pytest.raises((DimensionMismatchError, ParseError)):
        load_instance(bad)
    bad.write_text("garbage\n")
    with pytest.raises(ParseError) as exc:
        load_instance(bad)
    assert exc.value.line is not None


def test_spec_seed_seven_shape_and_replay():
    cfg = InstanceConfig.uniform(8, 4, 4, seed=7)
    a, b = generate_instance(cfg), generate_instance(cfg)
    assert a.H.shape == (8, 4) and a.H.dtype == complex
    assert a.H.tobytes() == b.H.tobytes()


def test_channel_power_variance_monte_carlo():
    # |H|^2 is Exp(1) when Re, Im ~ N(0, 1/2): variance 1
    inst = make_inst(1000, 100, 1, seed=2)
    assert np.var(np.abs(inst.H) ** 2) == pytest.approx(1.0, abs=0.02)


def test_single_user_matched_filter_hits_target():
    inst = make_inst(5, 1, 5, seed=3, gamma=4.0, sigma2=0.3)
    h = inst.H[:, 0]
    w = h * math.sqrt(4.0 * 0.3) / np.linalg.norm(h) ** 2
    assert evaluate_sinr(w[:, None], inst)[0] == pytest.approx(4.0, rel=1e-12)


def test_zero_beamformer():
    inst = make_inst(4, 3, 2, seed=1)
    assert np.all(evaluate_sinr(np.zeros((4, 3)), inst) == 0)
    r = make_inst(4, 3, 2, seed=1, eps=0.1)
    assert not any(robust_sinr_certificate(np.zeros((4, 3)), r, m) for m in range(3))


def test_truncated_channel_is_dimension_error(tmp_path):
    inst = make_inst(3, 2, 2, seed=1)
    p = tmp_path / "i.txt"
    save_instance(inst, p)
    lines = p.read_text().splitlines()
    p.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(DimensionMismatchError):
        load_instance(p)


def test_roundtrip_bit_exact(tmp_path):
    inst = make_inst(4, 3, 2, seed=123)
    p = tmp_path / "i.txt"
    save_instance(inst, p)
    assert load_instance(p).H.tobytes() == inst.H.tobytes()
