import csv

import numpy as np
import pytest

from gramint.bt import ExactModel, ReducedModel
from gramint.exceptions import ConstructionError, EvaluationError
from gramint.metrics import (CSV_HEADER, FrequencyGrid, fom_response, frequency_response,
                             hinf_error, modal_response, read_csv, spectral_norms, sweep,
                             transfer_function, write_csv)
from gramint.system import AssembledSystem, assemble

from oracles import random_stable_system

ONE = np.array([[1.0]])


def scalar_fom():
    return AssembledSystem(ONE, -ONE, ONE, ONE, np.array([5.0, 7.0]))


def test_scalar_transfer_function():
    assert transfer_function(ONE, -ONE, ONE, ONE, 0.0)[0, 0] == 1.0
    mags = [abs(transfer_function(ONE, -ONE, ONE, ONE, w)[0, 0]) for w in np.logspace(-2, 4, 30)]
    assert np.all(np.diff(mags) < 0) and mags[-1] < 1e-3


def test_heat_transfer_function_vs_inverse(heat16):
    asm = assemble(heat16, (5.0, 7.0))
    E, A = asm.E.toarray(), asm.A.toarray()
    ref = asm.C @ np.linalg.inv(1j * E - A) @ asm.B
    H = transfer_function(asm.E, asm.A, asm.B, asm.C, 1.0)
    assert abs(H - ref).max() <= 1e-12 * abs(ref).max()


def test_batched_and_pointwise_agree(rng):
    E, A, B, C = random_stable_system(rng, 12, m=2, p=3)
    omegas = np.logspace(-2, 2, 9)
    H = frequency_response(E, A, B, C, omegas)
    for w, Hw in zip(omegas, H):
        np.testing.assert_allclose(Hw, transfer_function(E, A, B, C, w), rtol=1e-12)


def test_spectral_norm_conventions(rng):
    H = rng.standard_normal((5, 1, 1)) + 1j * rng.standard_normal((5, 1, 1))
    np.testing.assert_allclose(spectral_norms(H), np.abs(H[:, 0, 0]))
    M = rng.standard_normal((4, 3, 2)) + 1j * rng.standard_normal((4, 3, 2))
    np.testing.assert_allclose(spectral_norms(M), [np.linalg.norm(m, 2) for m in M], rtol=1e-13)


def test_singular_pencil_reports_frequency():
    with pytest.raises(EvaluationError) as info:
        transfer_function(ONE, 0 * ONE, ONE, ONE, 0.0)
    assert info.value.omega == 0.0


def test_hinf_identity_and_zero_rom():
    fom = scalar_fom()
    same = ReducedModel(ONE, -ONE, ONE, ONE, np.zeros(0), method="algebraic")
    assert hinf_error(fom, same).hinf_abs <= 1e-12
    zero = ReducedModel(ONE, -ONE, 0 * ONE, 0 * ONE, np.zeros(0), method="algebraic")
    rec = hinf_error(fom, zero)
    assert rec.hinf_abs == pytest.approx(1.0, abs=1e-8)
    assert rec.hinf_rel == pytest.approx(1.0, abs=1e-12)
    assert np.isnan(rec.bound)


def test_bound_dominance_single_point(heat16):
    mu = (5.0, 7.0)
    rom = ExactModel(heat16, adi_tol=1e-12).reduce(mu)
    rec = hinf_error(assemble(heat16, mu), rom)
    assert rec.hinf_abs <= rec.bound + 1e-12


def test_refined_grid_never_lowers_the_sup(heat16):
    mu = (9.0, 4.0)
    asm = assemble(heat16, mu)
    rom = ExactModel(heat16, bt_tol=1e-4).reduce(mu)
    g = FrequencyGrid(count=40)
    coarse, fine = hinf_error(asm, rom, g), hinf_error(asm, rom, g.refined())
    assert fine.hinf_abs >= coarse.hinf_abs - 1e-13
    assert np.all(np.isin(np.round(g.omegas, 9), np.round(g.refined().omegas, 9)))


def test_frequency_grid_validation():
    with pytest.raises(ConstructionError):
        FrequencyGrid(1.0, 0.5)
    with pytest.raises(ConstructionError):
        FrequencyGrid(count=1)
    g = FrequencyGrid()
    assert g.omegas[0] == pytest.approx(1e-4) and g.omegas[-1] == pytest.approx(1e4)
    assert g.omegas.size == 200


def test_sweep_on_training_set_collapses_to_exact(heat16):
    pts = [(1.0, 4.0), (9.0, 10.0)]
    g = FrequencyGrid(count=30)
    model = ExactModel(heat16, adi_tol=1e-12)
    recs = sweep(heat16, "exact", model, pts, g)
    for mu, rec in zip(pts, recs):
        ref = hinf_error(assemble(heat16, mu), model.reduce(mu), g)
        assert rec.ok and rec.hinf_abs == ref.hinf_abs and rec.r == ref.r
        assert rec.hinf_abs <= rec.bound + 1e-12


def test_sweep_records_failures_and_keeps_order(heat16):
    pts = [(2.0, 5.0), (0.0, 5.0), (3.0, 6.0)]
    g = FrequencyGrid(count=20)
    cache = {}
    recs = sweep(heat16, "exact", ExactModel(heat16), pts, g, workers=2, fom_cache=cache)
    assert [r.mu.tolist() for r in recs] == [list(p) for p in pts]
    assert recs[0].ok and recs[2].ok
    assert not recs[1].ok and recs[1].r == -1 and np.isnan(recs[1].hinf_abs)
    assert len(cache) == 2
    again = sweep(heat16, "exact", ExactModel(heat16), pts, g, fom_cache=cache)
    assert [r.hinf_abs for r in again if r.ok] == [r.hinf_abs for r in recs if r.ok]


def test_csv_roundtrip(tmp_path, heat16):
    recs = sweep(heat16, "exact", ExactModel(heat16), [(2.0, 5.0)], FrequencyGrid(count=20))
    path = tmp_path / "r.csv"
    write_csv(recs, path)
    with open(path) as fh:
        assert next(csv.reader(fh)) == CSV_HEADER
    back = read_csv(path)[0]
    assert back.hinf_abs == recs[0].hinf_abs and back.bound == recs[0].bound
    assert back.mu.tolist() == [2.0, 5.0] and back.method == "exact"


def test_modal_path_matches_solves(heat16):
    asm = assemble(heat16, (3.0, 8.0))
    g = FrequencyGrid(count=50)
    ref = frequency_response(asm.E, asm.A, asm.B, asm.C, g.omegas)
    H = modal_response(asm.E, asm.A, asm.B, asm.C, g.omegas)
    assert np.abs(H - ref).max() <= 1e-12 * np.abs(ref).max()
    np.testing.assert_array_equal(fom_response(asm, g), H)


def test_indefinite_mass_falls_back_to_solves(rng):
    A = -np.diag([1.0, 2.0, 3.0])
    E = np.diag([1.0, -1.0, 1.0])
    B, C = rng.standard_normal((3, 1)), rng.standard_normal((1, 3))
    asm = AssembledSystem(E, A, B, C, np.array([0.0]))
    g = FrequencyGrid(count=5)
    np.testing.assert_array_equal(fom_response(asm, g), frequency_response(E, A, B, C, g.omegas))
