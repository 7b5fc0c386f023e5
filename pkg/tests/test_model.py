"""Tests for dispersions, form factors, dressing functions, and the
assembly of H(P) and the transformed operator T(P, f).

The 2x2 single-mode closed forms below were frozen from the quadratic
formula before the assembly code existed:
  nr, mu=0.75, lam=0.3 : E = -0.05 exactly
  nr, mu=0,    lam=0.15: E = -0.014852927038917718
  sr, mu=0.75, lam=0.3 : E = 0.9475720473876781
"""

import math

import numpy as np
import pytest

from nelsonlab.fock import (
    ModeGrid,
    build_mode_grid,
    enumerate_basis,
    field_operator,
    weyl_operator,
)
from nelsonlab.model import (
    BosonDispersion,
    FormFactor,
    ModelSpec,
    ParticleDispersion,
    assemble_hamiltonian,
    assemble_transformed,
    build_model,
    check_hypotheses,
    diagonal_energies,
    dressing_function,
    s_product,
    transformed_matvec,
    with_mu,
    with_p,
)


def as_dense(op):
    return op.toarray() if hasattr(op, "toarray") else np.asarray(op)


# ------------------------------------------------------- dispersions


def test_theta_nonrelativistic():
    disp = ParticleDispersion(kind="nr", mass=2.0)
    p = np.array([[0.0], [1.0], [-3.0]])
    assert np.allclose(disp.theta(p), [0.0, 0.25, 2.25])
    assert np.allclose(disp.grad_theta(p), p / 2.0)
    assert disp.c_theta2 == pytest.approx(0.25)


def test_theta_semirelativistic():
    disp = ParticleDispersion(kind="sr", mass=1.0)
    p = np.array([[0.0], [3.0]])
    assert np.allclose(disp.theta(p), [1.0, math.sqrt(10.0)])
    assert np.allclose(disp.grad_theta(p),
                       [[0.0], [3.0 / math.sqrt(10.0)]])
    assert disp.c_theta2 == pytest.approx(0.5)


def test_theta_rejects_bad_kind():
    with pytest.raises(ValueError):
        ParticleDispersion(kind="rel", mass=1.0)
    with pytest.raises(ValueError):
        ParticleDispersion(kind="nr", mass=0.0)


def test_omega_massive():
    bos = BosonDispersion(mu=0.4)
    k = np.array([[0.3], [-1.2]])
    assert np.allclose(bos.omega(k), [0.3, 1.2])
    assert np.allclose(bos.omega_mu(k),
                       [math.sqrt(0.09 + 0.16), math.sqrt(1.44 + 0.16)])
    # ordering in mu
    assert np.all(BosonDispersion(mu=0.2).omega_mu(k) < bos.omega_mu(k))
    assert np.all(bos.omega_mu(k) >= bos.omega(k))


# ------------------------------------------------------- form factors


def test_form_factor_values():
    ff = FormFactor(lam=0.5, alpha=0.25, cutoff=1.0)
    grid = build_mode_grid(d=1, k_max=2.0, m=8)  # modes out to 1.75
    v = ff.values(grid)
    norms = grid.norms()
    inside = norms <= 1.0
    assert np.allclose(v[inside], 0.5 * norms[inside] ** 0.25)
    assert np.all(v[~inside] == 0.0)
    assert np.count_nonzero(v == 0.0) == 4  # modes at +-1.25, +-1.75


def test_form_factor_window_rejection():
    # d=1 needs 2*alpha > 0
    for alpha in (0.0, -0.2):
        ff = FormFactor(lam=0.5, alpha=alpha, cutoff=1.0)
        with pytest.raises(ValueError, match=r"\(H4\)"):
            ff.require_window(1)
    FormFactor(lam=0.5, alpha=0.05, cutoff=1.0).require_window(1)
    # d=2 admits alpha = 0
    FormFactor(lam=0.5, alpha=0.0, cutoff=1.0).require_window(2)


def test_form_factor_infrared_flag():
    assert FormFactor(lam=1.0, alpha=0.25, cutoff=1.0).infrared_critical(1)
    assert not FormFactor(lam=1.0, alpha=0.75, cutoff=1.0).infrared_critical(1)
    # boundary alpha = 1/2 in d=1 is still critical (non-strict)
    assert FormFactor(lam=1.0, alpha=0.5, cutoff=1.0).infrared_critical(1)


def test_build_model_rejects_h4_violation():
    with pytest.raises(ValueError, match=r"\(H4\)"):
        build_model(kind="nr", lam=0.5, alpha=-0.1, k_max=1.0, mass=1.0,
                    mu=0.4, m=4, n_max=2, p=0.0)


# -------------------------------------------------- dressing functions


def _single_mode_spec(k, dk, n_max, *, kind="nr", lam, alpha, mass, mu, p):
    grid = ModeGrid(d=1, modes=np.array([[k]]), weights=np.array([dk]), h=dk)
    basis = enumerate_basis(grid, n_max)
    return ModelSpec(
        dispersion=ParticleDispersion(kind=kind, mass=mass),
        boson=BosonDispersion(mu=mu),
        formfactor=FormFactor(lam=lam, alpha=alpha, cutoff=10.0),
        p=np.array([p]),
        grid=grid,
        basis=basis,
    )


def test_dressing_worked_example():
    # v(0.5) = sqrt(2) * 0.5^0.5 = 1, omega_mu(0.5) = 0.6, Q = 0.4:
    # f = 1 / (0.6 - 0.2) = 2.5
    spec = _single_mode_spec(0.5, 1.0, 1, lam=math.sqrt(2.0), alpha=0.5,
                             mass=1.0, mu=math.sqrt(0.11), p=0.0)
    f = dressing_function(spec, q=np.array([0.4]))
    assert f.values[0] == pytest.approx(2.5, abs=1e-12)


def test_dressing_q_zero():
    spec = build_model(kind="nr", lam=0.5, alpha=0.25, k_max=1.0, mass=1.0,
                       mu=0.4, m=8, n_max=2, p=0.0)
    f = dressing_function(spec, q=np.zeros(1))
    v = spec.formfactor.values(spec.grid)
    assert np.allclose(f.values, v / spec.boson.omega_mu(spec.grid.modes))


def test_dressing_monotone_in_q():
    spec = build_model(kind="nr", lam=0.5, alpha=0.25, k_max=1.0, mass=1.0,
                       mu=0.4, m=8, n_max=2, p=0.0)
    j = int(np.argmax(spec.grid.modes[:, 0]))  # k > 0
    vals = [dressing_function(spec, q=np.array([q])).values[j]
            for q in (0.0, 0.3, 0.6)]
    assert vals[0] < vals[1] < vals[2]


def test_dressing_rejects_large_q():
    spec = build_model(kind="nr", lam=0.5, alpha=0.25, k_max=1.0, mass=1.0,
                       mu=0.4, m=4, n_max=2, p=0.0)
    with pytest.raises(ValueError):
        dressing_function(spec, q=np.array([1.0]))


def test_dressing_norms_positive_and_ordered():
    nr = build_model(kind="nr", lam=0.5, alpha=0.25, k_max=1.0, mass=1.0,
                     mu=0.4, m=8, n_max=2, p=0.0)
    sr = build_model(kind="sr", lam=0.5, alpha=0.25, k_max=1.0, mass=1.0,
                     mu=0.4, m=8, n_max=2, p=0.0)
    f_nr = dressing_function(nr, q=np.array([0.2]))
    f_sr = dressing_function(sr, q=np.array([0.2]))
    assert f_nr.norm_w > 0
    assert f_nr.norm_sharp == pytest.approx(f_nr.norm_w)
    assert f_sr.norm_sharp > f_sr.norm_w  # extra high-momentum term


# ------------------------------------------------------------ assembly


def test_2x2_hamiltonian_nr():
    spec = _single_mode_spec(1.0, 1.0, 1, lam=0.3, alpha=0.25, mass=1.0,
                             mu=0.75, p=0.0)
    H = as_dense(assemble_hamiltonian(spec))
    assert np.allclose(H, [[0.0, 0.3], [0.3, 1.75]], atol=1e-14)
    E = np.linalg.eigvalsh(H)[0]
    assert E == pytest.approx(-0.05, abs=1e-12)


def test_2x2_hamiltonian_nr_massless():
    spec = _single_mode_spec(1.0, 1.0, 1, lam=0.15, alpha=0.25, mass=1.0,
                             mu=0.0, p=0.0)
    H = as_dense(assemble_hamiltonian(spec))
    assert np.allclose(H, [[0.0, 0.15], [0.15, 1.5]], atol=1e-14)
    assert np.linalg.eigvalsh(H)[0] == pytest.approx(-0.014852927038917718,
                                                     abs=1e-12)


def test_2x2_hamiltonian_sr():
    spec = _single_mode_spec(1.0, 1.0, 1, kind="sr", lam=0.3, alpha=0.25,
                             mass=1.0, mu=0.75, p=0.0)
    H = as_dense(assemble_hamiltonian(spec))
    assert np.allclose(H, [[1.0, 0.3], [0.3, math.sqrt(2.0) + 1.25]],
                       atol=1e-14)
    assert np.linalg.eigvalsh(H)[0] == pytest.approx(0.9475720473876781,
                                                     abs=1e-12)


def test_lambda_zero_diagonal_ground_energy():
    spec = build_model(kind="nr", lam=0.0, alpha=0.25, k_max=1.0, mass=1.0,
                       mu=0.4, m=4, n_max=3, p=0.3)
    H = assemble_hamiltonian(spec)
    assert (H - H.multiply(np.eye(spec.basis.size) > 0)).nnz == 0  # diagonal
    E = min(H.diagonal())
    assert E == pytest.approx(spec.dispersion.theta(spec.p[None, :])[0])
    assert np.argmin(H.diagonal()) == 0  # vacuum


def test_diagonal_energies_helper():
    spec = build_model(kind="nr", lam=0.5, alpha=0.25, k_max=1.0, mass=1.0,
                       mu=0.4, m=4, n_max=2, p=0.2)
    H = as_dense(assemble_hamiltonian(spec))
    assert np.allclose(np.diag(H), diagonal_energies(spec))


def test_parity_spectrum_invariance():
    spec = build_model(kind="nr", lam=0.6, alpha=0.25, k_max=1.0, mass=1.0,
                       mu=0.2, m=4, n_max=2, p=0.37)
    Hp = as_dense(assemble_hamiltonian(spec))
    Hm = as_dense(assemble_hamiltonian(with_p(spec, np.array([-0.37]))))
    assert np.allclose(np.linalg.eigvalsh(Hp), np.linalg.eigvalsh(Hm),
                       atol=1e-10)


def test_mu_monotone_entrywise():
    spec = build_model(kind="nr", lam=0.5, alpha=0.25, k_max=1.0, mass=1.0,
                       mu=0.1, m=4, n_max=2, p=0.2)
    H_lo = as_dense(assemble_hamiltonian(spec))
    H_hi = as_dense(assemble_hamiltonian(with_mu(spec, 0.3)))
    diff = H_hi - H_lo
    off = diff - np.diag(np.diag(diff))
    assert np.max(np.abs(off)) == 0.0
    assert np.min(np.diag(diff)) >= 0.0
    assert np.max(np.diag(diff)) > 0.0


def test_mu_zero_underflow_rejected():
    spec = _single_mode_spec(1e-13, 1.0, 1, lam=0.3, alpha=0.25, mass=1.0,
                             mu=0.0, p=0.0)
    with pytest.raises(ValueError, match="diagonal gap"):
        assemble_hamiltonian(spec)


# ------------------------------------------------- transformed operator


def test_transformed_f_zero_is_hamiltonian():
    for kind in ("nr", "sr"):
        spec = build_model(kind=kind, lam=0.5, alpha=0.25, k_max=1.0,
                           mass=1.0, mu=0.4, m=2, n_max=3, p=0.3)
        H = as_dense(assemble_hamiltonian(spec))
        T = as_dense(assemble_transformed(spec, None))
        assert np.max(np.abs(T - H)) < 1e-14


def test_transformed_2x2_hand_expansion():
    # single mode k, weight dk, lam = 0, dressing value y
    k, dk, y, p, mu = 1.0, 0.5, 0.7, 0.3, 0.25
    spec = _single_mode_spec(k, dk, 1, lam=0.0, alpha=0.25, mass=1.0,
                             mu=mu, p=p)
    f = dressing_function(spec, q=np.zeros(1))
    f = f.with_values(np.array([y]))
    w = math.sqrt(k * k + mu * mu)
    root = math.sqrt(dk)
    A = np.array([[p - dk * k * y * y, root * k * y],
                  [root * k * y, p - dk * k * y * y - k]])
    T_hand = (A @ A / 2.0
              + np.diag([0.0, w])
              - np.array([[0.0, root * w * y], [root * w * y, 0.0]])
              + dk * w * y * y * np.eye(2))
    T = as_dense(assemble_transformed(spec, f))
    assert np.max(np.abs(T - T_hand)) < 1e-14


def test_transformed_matvec_matches_matrix():
    spec = build_model(kind="nr", lam=0.5, alpha=0.25, k_max=1.0, mass=1.0,
                       mu=0.4, m=2, n_max=4, p=0.3)
    f = dressing_function(spec, q=np.array([0.3]))
    T = as_dense(assemble_transformed(spec, f))
    mv = transformed_matvec(spec, f)
    rng = np.random.default_rng(5)
    for _ in range(3):
        x = rng.standard_normal(spec.basis.size)
        assert np.allclose(mv(x), T @ x, atol=1e-12)
    mv0 = transformed_matvec(spec, None)
    x = rng.standard_normal(spec.basis.size)
    assert np.allclose(mv0(x), as_dense(assemble_hamiltonian(spec)) @ x,
                       atol=1e-12)


def test_transform_consistency_trend():
    # |(W(f) H W(f)^T - T(P,f)) Pi_low| decreasing in the cutoff
    norms = []
    for n_max in (4, 6, 8):
        spec = build_model(kind="nr", lam=0.5, alpha=0.25, k_max=1.0,
                           mass=1.0, mu=0.4, m=4, n_max=n_max, p=0.3)
        f = dressing_function(spec, q=np.array([0.2]))
        scale = 0.3 / f.norm_w
        f = f.with_values(f.values * scale)
        H = as_dense(assemble_hamiltonian(spec))
        T = as_dense(assemble_transformed(spec, f))
        W = weyl_operator(spec.basis, f.values)
        low = spec.basis.cumulative_size(n_max // 2)
        diff = (W @ H @ W.T - T)[:, :low]
        norms.append(np.linalg.norm(diff, 2))
    assert norms[1] < norms[0]
    assert norms[2] < norms[1]


def test_transformed_ground_energy_consistency():
    spec = build_model(kind="nr", lam=0.5, alpha=0.25, k_max=1.0, mass=1.0,
                       mu=0.4, m=2, n_max=6, p=0.3)
    f = dressing_function(spec, q=np.array([0.2]))
    scale = 0.25 / f.norm_w
    f = f.with_values(f.values * scale)
    H = as_dense(assemble_hamiltonian(spec))
    T = as_dense(assemble_transformed(spec, f))
    E_h = np.linalg.eigvalsh(H)[0]
    E_t = np.linalg.eigvalsh(T)[0]
    assert abs(E_h - E_t) < 1e-4
    # dressed expectation of T reproduces E
    w_, v_ = np.linalg.eigh(H)
    psi = v_[:, 0]
    wpsi = weyl_operator(spec.basis, f.values) @ psi
    assert (wpsi @ (T @ wpsi)) / (wpsi @ wpsi) == pytest.approx(E_h, abs=1e-4)


def test_transformed_sr_psd_guard():
    spec = build_model(kind="sr", lam=0.5, alpha=0.25, k_max=1.0, mass=1.0,
                       mu=0.4, m=2, n_max=3, p=0.3)
    f = dressing_function(spec, q=np.array([0.2]))
    T = as_dense(assemble_transformed(spec, f))
    assert np.allclose(T, T.T, atol=1e-12)
    # spectrum of the sr operator sits above 0 for these couplings
    assert np.linalg.eigvalsh(T)[0] > 0


# ----------------------------------------------------------- hypotheses


def test_hypotheses_report():
    spec = build_model(kind="nr", lam=0.5, alpha=0.25, k_max=1.0, mass=1.0,
                       mu=0.4, m=8, n_max=2, p=0.0)
    rep = check_hypotheses(spec, mu_schedule=(0.4, 0.2, 0.1))
    assert rep["H2_subadditive"]["ok"]
    assert rep["H5_monotone"]["ok"]
    assert rep["omegadiff"]["max_ratio"] <= 1 + 1e-12
    assert rep["H4_integrability"]["ok"]
    assert rep["H4_integrability"]["infrared_critical"]
    regular = build_model(kind="nr", lam=0.5, alpha=0.75, k_max=1.0,
                          mass=1.0, mu=0.4, m=8, n_max=2, p=0.0)
    rep2 = check_hypotheses(regular, mu_schedule=(0.4, 0.2))
    assert not rep2["H4_integrability"]["infrared_critical"]


def test_s_product():
    grid = build_mode_grid(d=1, k_max=1.0, m=4)
    f = np.array([1.0, 2.0, 3.0, 4.0])
    g = np.array([1.0, 1.0, 0.0, -1.0])
    assert s_product(grid, f, g) == pytest.approx(0.5 * (1 + 2 - 4))
