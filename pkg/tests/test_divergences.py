import numpy as np
import pytest

from qsuff import rand
from qsuff.channels import (depolarizing_channel, identity_channel,
                            partial_trace_channel, unitary_channel)
from qsuff.divergences import (connes_cocycle, equality_intertwiner_residual,
                               modular_flow, monotonicity_gap,
                               relative_entropy, relative_modular_audit,
                               transition_probability, von_neumann_entropy)
from qsuff.linalg import dagger, frobenius
from qsuff.states import DensityMatrix


def test_transition_probability_basics():
    gen = rand.rng(60)
    d = rand.random_density(3, gen)
    assert abs(transition_probability(d, d) - 1.0) < 1e-12
    assert transition_probability(np.diag([1.0, 0.0]).astype(complex),
                                  np.diag([0.0, 1.0]).astype(complex)) == 0.0
    # scalar spectral formula: sqrt(0.45) + sqrt(0.05)
    value = transition_probability(np.diag([0.5, 0.5]).astype(complex),
                                   np.diag([0.9, 0.1]).astype(complex))
    assert abs(value - 0.8944271909999159) < 1e-12
    d2 = rand.random_density(3, gen)
    assert abs(transition_probability(d, d2) - transition_probability(d2, d)) < 1e-12
    assert 0.0 <= transition_probability(d, d2) <= 1.0


def test_relative_entropy_basics():
    gen = rand.rng(61)
    d = rand.random_density(4, gen)
    assert abs(relative_entropy(d, d)) < 1e-10
    assert abs(relative_entropy(np.diag([1.0, 0.0]).astype(complex),
                                np.diag([0.5, 0.5]).astype(complex))
               - np.log(2.0)) < 1e-12
    assert relative_entropy(np.diag([0.5, 0.5]).astype(complex),
                            np.diag([1.0, 0.0]).astype(complex)) == float("inf")
    d2 = rand.random_density(4, gen)
    assert relative_entropy(d, d2) >= 0.0


def test_von_neumann_entropy():
    assert abs(von_neumann_entropy(np.diag([1.0, 0.0]).astype(complex))) < 1e-12
    assert abs(von_neumann_entropy(np.eye(4, dtype=complex) / 4) - np.log(4)) < 1e-12
    # -0.9 log 0.9 - 0.1 log 0.1
    assert abs(von_neumann_entropy(np.diag([0.9, 0.1]).astype(complex))
               - 0.3250829733914482) < 1e-12


def test_cocycle_basics():
    gen = rand.rng(62)
    phi = rand.random_density(3, gen)
    omega = rand.random_density(3, gen)
    assert frobenius(connes_cocycle(phi, omega, 0.0).u - np.eye(3)) < 1e-12
    # commuting diagonal case: scalar formula (p_k/q_k)^{it}
    p = np.array([0.2, 0.5, 0.3])
    q = np.array([0.6, 0.1, 0.3])
    t = 0.83
    u = connes_cocycle(np.diag(p).astype(complex), np.diag(q).astype(complex), t).u
    assert frobenius(u - np.diag((p / q) ** (1j * t))) < 1e-12
    for t in (0.3, -1.7):
        assert frobenius(connes_cocycle(phi, phi, t).u - np.eye(3)) < 1e-11


def test_cocycle_partial_isometry_and_support():
    gen = rand.rng(63)
    omega = rand.random_density(4, gen)
    phi = rand.random_density(4, gen, rank=2)
    sample = connes_cocycle(phi, omega, 0.9)
    p = np.zeros((4, 4), dtype=complex)
    w, v = np.linalg.eigh(phi)
    cols = v[:, w > 1e-12]
    p = cols @ dagger(cols)
    assert frobenius(sample.u @ dagger(sample.u) - p) < 1e-9
    with pytest.raises(ValueError):
        connes_cocycle(omega, phi, 0.5)  # support violation


def test_cocycle_chain_rule():
    gen = rand.rng(64)
    for _ in range(5):
        phi = rand.random_density(3, gen)
        omega = rand.random_density(3, gen)
        s, t = 0.62, -1.24
        u_sum = connes_cocycle(phi, omega, s + t).u
        u_s = connes_cocycle(phi, omega, s).u
        u_t = connes_cocycle(phi, omega, t).u
        assert frobenius(u_sum - u_s @ modular_flow(omega, u_t, s)) < 1e-9


def test_modular_flow():
    gen = rand.rng(65)
    omega = rand.random_density(3, gen)
    x = rand.ginibre(3, 3, gen)
    assert frobenius(modular_flow(omega, x, 0.0) - x) < 1e-12
    commuting = np.diag([1.0, 2.0, 3.0]).astype(complex)
    diag_omega = DensityMatrix.diagonal([0.5, 0.3, 0.2])
    assert frobenius(modular_flow(diag_omega.matrix, commuting, 1.4) - commuting) < 1e-12
    # qubit off-diagonal phase
    p, q, t = 0.8, 0.2, 1.0
    omega2 = np.diag([p, q]).astype(complex)
    raising = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    flowed = modular_flow(omega2, raising, t)
    assert abs(flowed[0, 1] - np.exp(1j * t * (np.log(p) - np.log(q)))) < 1e-12
    # preserves the omega expectation
    assert abs(np.trace(omega @ modular_flow(omega, x, 0.7))
               - np.trace(omega @ x)) < 1e-10
    with pytest.raises(ValueError):
        modular_flow(np.diag([1.0, 0.0]).astype(complex), x[:2, :2], 0.5)


def test_audit_identity_and_unitary():
    gen = rand.rng(66)
    d1 = rand.random_density(3, gen)
    d2 = rand.random_density(3, gen)
    audit = relative_modular_audit(identity_channel(3), d1, d2)
    assert audit.max_violation <= 1e-10
    assert frobenius(audit.delta - audit.delta0) < 1e-12
    assert frobenius(audit.v - np.eye(9)) < 1e-9
    audit_u = relative_modular_audit(unitary_channel(rand.random_unitary(3, gen)),
                                     d1, d2)
    assert audit_u.max_violation <= 1e-10


def test_audit_partial_trace_products():
    gen = rand.rng(67)
    t = partial_trace_channel([2, 3], [0])
    d1 = np.kron(rand.random_density(2, gen), rand.random_density(3, gen))
    d2 = np.kron(rand.random_density(2, gen), rand.random_density(3, gen))
    audit = relative_modular_audit(t, d1, d2)
    assert audit.max_violation <= 1e-9
    assert np.linalg.norm(audit.v, 2) <= 1.0 + 1e-10


def test_audit_random_channels():
    gen = rand.rng(68)
    for _ in range(10):
        d = int(gen.integers(2, 5))
        ch = rand.random_cptp_channel(d, d, gen)
        d1 = rand.random_density(d, gen)
        d2 = rand.random_density(d, gen)
        audit = relative_modular_audit(ch, d1, d2)
        assert audit.max_violation <= 1e-9, audit.details


def test_audit_rejects():
    gen = rand.rng(69)
    with pytest.raises(ValueError):
        relative_modular_audit(rand.random_unital_channel(3, gen),
                               rand.random_density(3, gen),
                               rand.random_density(3, gen))


def test_monotonicity_identity_and_depolarizing():
    gen = rand.rng(70)
    d1, d2 = rand.random_density(3, gen), rand.random_density(3, gen)
    assert abs(monotonicity_gap(identity_channel(3), d1, d2)) < 1e-12
    dep_gap = monotonicity_gap(depolarizing_channel(3), d1, d2)
    assert abs(dep_gap - (1.0 - transition_probability(d1, d2))) < 1e-10
    assert dep_gap >= 0.0


def test_monotonicity_random_trials():
    gen = rand.rng(71)
    for d in (2, 3):
        for _ in range(100):
            ch = rand.random_cptp_channel(d, d, gen)
            d1, d2 = rand.random_density(d, gen), rand.random_density(d, gen)
            assert monotonicity_gap(ch, d1, d2, "transition") >= -1e-10
            assert monotonicity_gap(ch, d1, d2, "relative_entropy") >= -1e-10


def test_equality_propagation():
    gen = rand.rng(72)
    # unitary conjugation: exact equality, intertwiner identity holds
    d1, d2 = rand.random_density(3, gen), rand.random_density(3, gen)
    u_ch = unitary_channel(rand.random_unitary(3, gen))
    assert abs(monotonicity_gap(u_ch, d1, d2)) <= 1e-10
    assert equality_intertwiner_residual(u_ch, d1, d2) <= 1e-8
    # partial trace with a shared second factor: equality instance
    t = partial_trace_channel([2, 2], [0])
    shared = rand.random_density(2, gen)
    e1 = np.kron(rand.random_density(2, gen), shared)
    e2 = np.kron(rand.random_density(2, gen), shared)
    assert abs(monotonicity_gap(t, e1, e2)) <= 1e-10
    assert equality_intertwiner_residual(t, e1, e2) <= 1e-8
    # distinct second factors: strict monotonicity, identity fails
    f2 = np.kron(rand.random_density(2, gen), rand.random_density(2, gen))
    assert monotonicity_gap(t, e1, f2) > 1e-4
    assert equality_intertwiner_residual(t, e1, f2) > 1e-4
