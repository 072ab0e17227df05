import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from tgcn.tensorcore import CP, DENSE, CoreTensor, ShapeError, cp_reconstruct, n_mode_product, relation_transform


def brute_mode_product(T, v, mode):
    I, J, K = T.shape
    if mode == 1:
        out = np.zeros((J, K))
        for i in range(I):
            for j in range(J):
                for k in range(K):
                    out[j, k] += T[i, j, k] * v[i]
    elif mode == 2:
        out = np.zeros((I, K))
        for i in range(I):
            for j in range(J):
                for k in range(K):
                    out[i, k] += T[i, j, k] * v[j]
    else:
        out = np.zeros((I, J))
        for i in range(I):
            for j in range(J):
                for k in range(K):
                    out[i, j] += T[i, j, k] * v[k]
    return out


def brute_cp(W1, W2, W3):
    nb, dr = W1.shape
    de, do = W2.shape[1], W3.shape[1]
    out = np.zeros((de, dr, do))
    for b in range(nb):
        for i in range(de):
            for j in range(dr):
                for k in range(do):
                    out[i, j, k] += W2[b, i] * W1[b, j] * W3[b, k]
    return out


def random_cp(rng, nb, de, dr, do):
    return (torch.from_numpy(rng.normal(size=(nb, dr))), torch.from_numpy(rng.normal(size=(nb, de))),
            torch.from_numpy(rng.normal(size=(nb, do))))


def test_mode_product_zero_vector(rng):
    T = torch.from_numpy(rng.normal(size=(3, 4, 5)))
    assert torch.count_nonzero(n_mode_product(T, torch.zeros(4, dtype=T.dtype), 2)) == 0


def test_mode_product_all_ones():
    out = n_mode_product(torch.ones(2, 2, 2, dtype=torch.float64), torch.tensor([1.0, 2.0], dtype=torch.float64), 1)
    assert out.tolist() == [[3.0, 3.0], [3.0, 3.0]]


@pytest.mark.parametrize("mode", [1, 2, 3])
def test_mode_product_matches_loops(rng, mode):
    T = rng.normal(size=(3, 4, 5))
    v = rng.normal(size=T.shape[mode - 1])
    np.testing.assert_allclose(n_mode_product(torch.from_numpy(T), torch.from_numpy(v), mode).numpy(),
                               brute_mode_product(T, v, mode), atol=1e-12)


def test_mode_products_commute(rng):
    T = rng.normal(size=(3, 4, 5))
    u, v = rng.normal(size=3), rng.normal(size=4)
    # after contracting mode 1 the old mode 2 becomes mode 1
    a = np.einsum("jk,j->k", brute_mode_product(T, u, 1), v)
    b = np.einsum("ik,i->k", brute_mode_product(T, v, 2), u)
    assert np.max(np.abs(a - b)) < 1e-10
    Tt = torch.from_numpy(T)
    lib = torch.tensordot(n_mode_product(Tt, torch.from_numpy(u), 1), torch.from_numpy(v), dims=([0], [0]))
    assert np.max(np.abs(lib.numpy() - a)) < 1e-10


def test_mode_product_shape_error():
    with pytest.raises(ShapeError, match="mode-2"):
        n_mode_product(torch.ones(2, 3, 4), torch.ones(4), 2)


def test_cp_reconstruct_single_term():
    core = CoreTensor.from_factors(torch.tensor([[1.0, 2.0]]), torch.tensor([[3.0, 4.0]]), torch.tensor([[5.0, 6.0]]))
    dense = cp_reconstruct(core)
    assert dense.layout == DENSE
    assert dense.dense[0, 0, 0].item() == 15.0
    assert dense.dense[1, 1, 1].item() == 48.0


def test_cp_reconstruct_zero():
    z = torch.zeros(2, 3)
    assert torch.count_nonzero(cp_reconstruct(CoreTensor.from_factors(z, z, z)).dense) == 0


def test_cp_reconstruct_matches_loops(rng):
    W1, W2, W3 = random_cp(rng, 4, 3, 2, 5)
    core = CoreTensor.from_factors(W1, W2, W3)
    np.testing.assert_allclose(cp_reconstruct(core).dense.detach().numpy(),
                               brute_cp(W1.numpy(), W2.numpy(), W3.numpy()), atol=1e-12)


def test_cp_path_agrees_with_dense_path(rng):
    W1, W2, W3 = random_cp(rng, 4, 3, 3, 3)
    core = CoreTensor.from_factors(W1, W2, W3)
    dense = cp_reconstruct(core)
    h, e = torch.from_numpy(rng.normal(size=3)), torch.from_numpy(rng.normal(size=3))
    a = relation_transform(core, h, e).detach()
    b = relation_transform(dense, h, e).detach()
    assert torch.max(torch.abs(a - b)) < 1e-10


@pytest.mark.parametrize("d,nb", [(2, 1), (4, 2), (5, 3), (3, 3)])
def test_frontal_slices(rng, d, nb):
    W1, W2, W3 = random_cp(rng, nb, d, d, d)
    X = brute_cp(W1.numpy(), W2.numpy(), W3.numpy())
    lib = cp_reconstruct(CoreTensor.from_factors(W1, W2, W3)).dense.detach().numpy()
    for k in range(d):
        slice_k = W2.numpy().T @ np.diag(W3.numpy()[:, k]) @ W1.numpy()
        assert np.max(np.abs(lib[:, :, k] - slice_k)) < 1e-10
        assert np.max(np.abs(X[:, :, k] - slice_k)) < 1e-10


def test_transform_zero_entity():
    core = CoreTensor(3, 3, 3, n_b=2, dtype=torch.float64)
    out = relation_transform(core, torch.zeros(3, dtype=torch.float64), torch.ones(3, dtype=torch.float64))
    assert torch.count_nonzero(out) == 0


def test_transform_single_nonzero_entry():
    W = torch.zeros(2, 2, 2, dtype=torch.float64)
    W[0, 0, 0] = 1.0
    core = CoreTensor.from_dense(W)
    out = relation_transform(core, torch.tensor([2.0, 0.0], dtype=torch.float64), torch.tensor([3.0, 0.0], dtype=torch.float64))
    assert out.tolist() == [6.0, 0.0]


def test_transform_cp_vs_dense_relative(rng):
    W1, W2, W3 = random_cp(rng, 6, 5, 4, 7)
    core = CoreTensor.from_factors(W1, W2, W3)
    dense = torch.from_numpy(brute_cp(W1.numpy(), W2.numpy(), W3.numpy()))
    h, e = torch.from_numpy(rng.normal(size=(10, 5))), torch.from_numpy(rng.normal(size=(10, 4)))
    ref = torch.einsum("ijk,ni,nj->nk", dense, h, e)
    got = relation_transform(core, h, e).detach()
    assert (torch.linalg.norm(got - ref) / torch.linalg.norm(ref)) < 1e-8


def test_transform_shape_error():
    core = CoreTensor(3, 2, 3)
    with pytest.raises(ShapeError):
        relation_transform(core, torch.ones(4), torch.ones(2))


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(-5, 5), seed=st.integers(0, 10_000), cp=st.booleans())
def test_multilinearity(alpha, seed, cp):
    gen = torch.Generator().manual_seed(seed)
    core = CoreTensor(4, 3, 4, n_b=3 if cp else None, dtype=torch.float64, generator=gen)
    h = torch.randn(4, dtype=torch.float64, generator=gen)
    e = torch.randn(3, dtype=torch.float64, generator=gen)
    base = relation_transform(core, h, e).detach()
    assert torch.allclose(relation_transform(core, alpha * h, e).detach(), alpha * base, atol=1e-10)
    assert torch.allclose(relation_transform(core, h, alpha * e).detach(), alpha * base, atol=1e-10)


@pytest.mark.parametrize("dims,nb", [((100, 100, 100), 100), ((7, 3, 5), 4), ((2, 2, 2), 1)])
def test_parameter_counts(dims, nb):
    cp = CoreTensor(*dims, n_b=nb)
    dense = CoreTensor(*dims)
    assert cp.layout == CP and cp.num_parameters == nb * sum(dims)
    assert sum(p.numel() for p in cp.parameters()) == nb * sum(dims)
    assert dense.num_parameters == dims[0] * dims[1] * dims[2]


def test_relation_matrices_match_transform(rng):
    for nb in (None, 3):
        core = CoreTensor(4, 3, 5, n_b=nb, dtype=torch.float64)
        e = torch.from_numpy(rng.normal(size=(2, 3)))
        h = torch.from_numpy(rng.normal(size=4))
        mats = core.relation_matrices(e).detach()
        for r in range(2):
            assert torch.allclose(h @ mats[r], relation_transform(core, h, e[r]).detach(), atol=1e-12)
