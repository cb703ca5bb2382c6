import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phaseflow import manifolds as M
from phaseflow import symbols as S


def _nodes(m):
    rho, frames, w = m.materialize()
    return rho.reshape(-1, 2 * m.n), frames.reshape(-1, 2 * m.n, 2 * m.n), w.ravel()


def test_real_space_grid():
    m = M.IRManifold.real_space(1, 2.0, 5)
    rho, frames, w = _nodes(m)
    assert m.num_nodes == 25 and rho.shape == (25, 2)
    assert np.all(rho.imag == 0)
    assert np.allclose(frames, np.eye(2))
    assert w.sum() == pytest.approx(16.0)


def test_flow_of_x_shifts_xi_imaginary():
    m = M.flow(M.IRManifold.real_space(1, 1.0, 5), M.coordinate(1, 0), 0.3, 0.1)
    rho, _, _ = _nodes(m)
    base, _, _ = _nodes(M.IRManifold.real_space(1, 1.0, 5))
    assert np.allclose(rho[:, 0], base[:, 0])
    assert np.allclose(rho[:, 1], base[:, 1] - 0.3j)


def test_weight_graph_is_time_one_flow_of_minus_phi():
    phi = M.x_only(1, alpha=1.0, coef=0.2)
    graph = M.IRManifold.weight_graph(phi, 2.0, 9)
    flowed = M.flow(M.IRManifold.real_space(1, 2.0, 9), phi.scaled(-1.0), 1.0, 0.05)
    a, fa, _ = _nodes(graph)
    b, fb, _ = _nodes(flowed)
    assert np.allclose(a, b, atol=1e-9)
    assert np.allclose(fa, fb, atol=1e-8)


def test_weight_graph_rejects_xi_dependence():
    with pytest.raises(M.GeneratorError):
        M.IRManifold.weight_graph(M.coordinate(1, 1), 2.0, 5)


def test_generator_must_be_real():
    g = M.coordinate(1, 0)
    bad = M.GeneratorFunction(1, g.basis, np.array([[1.0 + 1.0j]]))
    with pytest.raises(M.GeneratorError):
        bad.validate()


@given(st.integers(0, 2**31))
@settings(max_examples=8, deadline=None)
def test_flow_preserves_ir_structure(seed):
    rng = np.random.default_rng(seed)
    g = M.random_generator(1, rng, scale=0.3)
    m = M.flow(M.IRManifold.real_space(1, 2.0, 41), g, 0.2, 0.05)
    rep = M.check_ir(m)
    assert rep.max_im_sigma < 1e-7
    assert rep.fd_frame_residual < 5e-3
    for c in m.chunks():
        # flows are complex canonical, so the Liouville density stays 1 in base coordinates
        assert np.allclose(M.volume_density(c.frames), 1.0, atol=1e-8)


def test_flow_composition_and_reversal(rng):
    g = M.random_generator(1, rng, scale=0.3)
    base = M.IRManifold.real_space(1, 1.5, 11)
    back = M.flow(M.flow(base, g, 0.15, 0.05), g, -0.15, 0.05)
    a, fa, _ = _nodes(back)
    b, fb, _ = _nodes(base)
    assert np.allclose(a, b, atol=1e-9) and np.allclose(fa, fb, atol=1e-8)


def test_two_dimensional_flow_ir(rng):
    g = M.random_generator(2, rng, scale=0.2)
    m = M.flow(M.IRManifold.real_space(2, 1.0, 7), g, 0.1, 0.05)
    assert M.check_ir(m, fd_check=False).max_im_sigma < 1e-8


def test_field_identities(rng):
    for n in (1, 2):
        g = M.random_generator(n, rng)
        pts = rng.normal(size=(16, 2 * n)) + 0.1j * rng.normal(size=(16, 2 * n))
        res = M.field_identities_check(g, pts)
        assert max(res.values()) < 1e-10


def test_deformation_distance_of_x():
    # d(x) restricted to real space has unit norm everywhere
    m = M.IRManifold.real_space(1, 1.0, 5)
    assert M.deformation_distance(m, [(M.coordinate(1, 0), 0.2), (M.coordinate(1, 0), -0.1)]) == pytest.approx(0.3)


def test_save_load_roundtrip(tmp_path, rng):
    g = M.random_generator(1, rng, scale=0.3)
    m = M.flow(M.IRManifold.weight_graph(M.x_only(1, alpha=1.0, coef=0.1), 2.0, 9), g, 0.1, 0.05)
    path = M.save_manifold(m, tmp_path / "state.json")
    m2 = M.load_manifold(path)
    a, _, _ = _nodes(m)
    b, _, _ = _nodes(m2)
    assert np.array_equal(a, b)
    assert json.loads(path.read_text())["nodes_file"] == "state.nodes.bin"
    raw = np.fromfile(tmp_path / "state.nodes.bin", dtype="<f8").reshape(-1, 2, 2)
    assert np.allclose(raw[..., 0] + 1j * raw[..., 1], a)


def test_generator_json_roundtrip(rng):
    g = M.random_generator(2, rng)
    h = M.GeneratorFunction.from_json(json.loads(json.dumps(g.to_json())))
    pts = rng.normal(size=(4, 4)).astype(complex)
    assert np.allclose(g.value(pts), h.value(pts))


def test_nonautonomous_generator_time_dependence(rng):
    f0, f1 = M.coordinate(1, 0), M.coordinate(1, 1)
    g = M.nonautonomous(f0, f1)
    pts = rng.normal(size=(3, 2)).astype(complex)
    assert np.allclose(g.value(pts, t=0.5), f0.value(pts) + 0.5 * f1.value(pts))
    assert np.allclose(g.time_derivative().value(pts), f1.value(pts))


def test_flow_rejects_dimension_mismatch():
    with pytest.raises(M.GeneratorError):
        M.flow(M.IRManifold.real_space(1, 1.0, 5), M.coordinate(2, 0), 0.1)


def test_symbol_outside_tube_raises_on_deep_flow():
    from phaseflow import functional as F

    m = M.flow(M.IRManifold.real_space(1, 1.0, 5), M.coordinate(1, 0), 2.0, 0.1)
    with pytest.raises(S.DomainError):
        F.ladder_sums(m, S.shifted_ring(0.3), [0.1])
