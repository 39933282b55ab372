import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from m2vsl import tensor as T
from m2vsl.contrastive import (BatchPack, ContrastiveConfig, loss_a2v, loss_mc, loss_mmc, loss_v2a,
                               similarity_matrix)
from m2vsl.errors import DimensionError, UsageError
from m2vsl.tensor import Value

CFG = ContrastiveConfig(tau=0.03)


def _batch(rng, b=4, d=6, grids=((4, 4), (2, 2), (1, 1))):
    audio = Value(rng.standard_normal((b, d)))
    vs = [Value(rng.standard_normal((b, h, w, d))) for h, w in grids]
    return BatchPack(audio, vs)


def _symmetric(b, d=5, grids=((3, 3), (2, 2))):
    rng = np.random.default_rng(0)
    a = rng.standard_normal(d)
    v = rng.standard_normal(d)
    audio = Value(np.tile(a, (b, 1)))
    vs = [Value(np.broadcast_to(v, (b, h, w, d)).copy()) for h, w in grids]
    return BatchPack(audio, vs)


@pytest.mark.parametrize("b", [2, 3, 8])
@pytest.mark.parametrize("s", [1, 2, 3])
def test_symmetric_batch_identities(b, s):
    pack = _symmetric(b, grids=[(2, 2)] * s)
    assert abs(loss_a2v(pack, CFG).item() - s * math.log(b)) <= 1e-9
    assert abs(loss_v2a(pack, CFG).item() - s * math.log(b)) <= 1e-9
    assert abs(loss_mmc(pack, CFG).item() - 2 * s * math.log(b)) <= 1e-9


def test_single_scale_a2v_is_the_baseline_loss(rng):
    pack = _batch(rng, grids=((3, 3),))
    assert loss_a2v(pack, CFG).item() == loss_mc(pack.audio, pack.visual[0], CFG).item()


def test_baseline_loss_matches_loop_oracle(rng):
    pack = _batch(rng, b=3, grids=((2, 3),))
    a, v = pack.audio.data, pack.visual[0].data
    sim = [[max(float(a[i] @ v[k, y, x] / np.linalg.norm(a[i]) / np.linalg.norm(v[k, y, x]))
                for y in range(2) for x in range(3)) for k in range(3)] for i in range(3)]
    got = loss_mc(pack.audio, pack.visual[0], CFG).item()
    assert got == pytest.approx(oracles.nce_row_loss(sim, 0.03), rel=1e-12)


def test_v2a_is_a2v_of_transposed_similarities(rng):
    pack = _batch(rng)
    v2a = 0.0
    for vs in pack.visual:
        sim = similarity_matrix(pack.audio, vs).data
        v2a += oracles.nce_row_loss(sim.T.tolist(), 0.03)
    assert loss_v2a(pack, CFG).item() == pytest.approx(v2a, rel=1e-12)


def test_mmc_is_sum_of_both_directions(rng):
    pack = _batch(rng)
    total = loss_a2v(pack, CFG).item() + loss_v2a(pack, CFG).item()
    assert loss_mmc(pack, CFG).item() == pytest.approx(total, rel=1e-14)


def test_scales_used_restricts_terms(rng):
    pack = _batch(rng)
    one = loss_a2v(pack, ContrastiveConfig(tau=0.03, scales_used=(2,))).item()
    ref = loss_mc(pack.audio, pack.visual[1], CFG).item()
    assert one == pytest.approx(ref, rel=1e-14)
    with pytest.raises(UsageError):
        loss_a2v(pack, ContrastiveConfig(scales_used=(4,)))


def test_perfectly_aligned_batch_has_near_zero_loss():
    b, d = 3, 3
    audio = Value(np.eye(b, d))
    vis = Value(np.eye(b, d)[:, None, None, :] * np.ones((b, 2, 2, d)))
    assert loss_mc(audio, vis, CFG).item() < 1e-10


def test_batch_validation(rng):
    with pytest.raises(UsageError):
        BatchPack(Value(rng.standard_normal((1, 4))), [Value(rng.standard_normal((1, 2, 2, 4)))])
    with pytest.raises(DimensionError):
        BatchPack(Value(rng.standard_normal((2, 4))), [Value(rng.standard_normal((3, 2, 2, 4)))])


@given(st.integers(2, 6), st.integers(0, 10_000))
def test_loss_bounds(b, seed):
    """Each InfoNCE term lies in [0, ln B + 2/tau] since cosines lie in [-1, 1]."""
    pack = _batch(np.random.default_rng(seed), b=b, grids=((2, 2),))
    val = loss_a2v(pack, CFG).item()
    assert 0.0 <= val <= math.log(b) + 2 / 0.03


@given(st.integers(0, 10_000))
def test_loss_is_invariant_to_batch_permutation(seed):
    rng = np.random.default_rng(seed)
    pack = _batch(rng, b=4)
    perm = rng.permutation(4)
    shuffled = BatchPack(Value(pack.audio.data[perm]), [Value(v.data[perm]) for v in pack.visual])
    assert loss_mmc(shuffled, CFG).item() == pytest.approx(loss_mmc(pack, CFG).item(), rel=1e-12)


def test_similarity_gradient_flows_only_to_max_location(rng):
    pack = _batch(rng, b=2, grids=((3, 3),))
    T.backward(T.sum(similarity_matrix(pack.audio, pack.visual[0])))
    nonzero = np.count_nonzero(np.abs(pack.visual[0].grad).sum(-1))
    assert nonzero <= 2 * 2  # one winning location per (audio, image) pair
