import numpy as np
import pytest

from bcm.errors import ConfigError
from bcm.inpaint import InpaintConfig, run_inpaint, run_trial, summarize


def small(**kw):
    base = dict(p=3, trials=2, ibp_method="log")
    base.update(kw)
    return InpaintConfig(**base)


@pytest.fixture(scope="module")
def occluded():
    seen = []
    return run_inpaint(small(), seen.append), seen


def test_occlusion_run_structure(occluded):
    results, seen = occluded
    assert [r.trial for r in results] == [0, 1]
    assert seen == results
    for r in results:
        assert r.lam.shape == (3,) and r.lam.sum() == pytest.approx(1.0)
        assert r.lam_linear.sum() == pytest.approx(1.0)
        for g in (r.original, r.corrupted, r.bcm, r.linear):
            assert g.shape == (28, 28) and np.all(g >= 0)
            assert g.sum() == pytest.approx(1.0, abs=1e-6)
        assert np.all(r.corrupted[10:18, 10:18] == 0)
        assert r.w2_bcm >= 0 and r.w2_linear >= 0
        assert r.row()[3] == int(r.w2_bcm <= r.w2_linear)
    s = summarize(results)
    assert s["trials"] == 2 and 0.0 <= s["bcm_win_rate"] <= 1.0


def test_trials_are_independent_of_run_length(occluded):
    results, _ = occluded
    again = run_trial(small(), 1)
    np.testing.assert_array_equal(again.bcm, results[1].bcm)
    assert again.w2_bcm == results[1].w2_bcm


def test_noise_mode():
    (r,) = run_inpaint(small(mode="noise", alpha=0.3, trials=1))
    assert np.all(r.corrupted > 0)
    assert r.bcm.sum() == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize(
    "changes",
    [{"mode": "blur"}, {"alpha": 1.5}, {"p": 0}, {"trials": 0}, {"epsilon": 0.0}, {"ibp_method": "fft"}, {"block": 30}],
)
def test_validation(changes):
    with pytest.raises(ConfigError):
        run_inpaint(small(**changes))


def test_missing_mnist_dir(tmp_path):
    with pytest.raises(FileNotFoundError):
        run_inpaint(small(mnist_dir=str(tmp_path)))


@pytest.mark.slow
def test_clean_query_among_references_is_recovered():
    cfg = InpaintConfig(
        p=5, trials=1, mode="noise", alpha=0.0, query_in_refs=True,
        epsilon=0.2, max_iters=100_000, ibp_epsilon=0.3, ibp_method="log",
    )
    (r,) = run_inpaint(cfg)
    assert r.lam[0] > 0.9
    assert r.w2_bcm < 0.05
