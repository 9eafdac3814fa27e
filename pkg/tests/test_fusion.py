import numpy as np
import pytest

from wdmir import fusion, wavelet
from wdmir.errors import ConfigError, ShapeError
from wdmir.numerics.tensor import Tensor


@pytest.fixture
def wfm():
    return fusion.init_wfm(np.random.default_rng(0), d_video=3, d_audio=5, d_model=6)


def test_resample_keeps_endpoints_and_identity():
    x = np.random.default_rng(1).normal(size=(13, 2))
    y = fusion.resample(Tensor(x), 32).data
    np.testing.assert_allclose(y[[0, -1]], x[[0, -1]])
    np.testing.assert_array_equal(fusion.resample(Tensor(x), 13).data, x)


def test_resample_linear_ramp_is_exact():
    ramp = np.linspace(0, 1, 7)[:, None]
    np.testing.assert_allclose(fusion.resample(Tensor(ramp), 16).data[:, 0], np.linspace(0, 1, 16))


def test_interp_rows_are_convex():
    m = fusion._interp_matrix(11, 24)
    np.testing.assert_allclose(m.sum(1), 1.0)
    assert (m >= 0).all()


def test_align_shapes_and_length_check(wfm):
    rng = np.random.default_rng(2)
    pair = fusion.align_sequences(Tensor(rng.normal(size=(4, 9, 3))), Tensor(rng.normal(size=(4, 20, 5))),
                                  wfm, 16)
    assert pair.V.shape == pair.A.shape == (4, 16, 6)
    with pytest.raises(ConfigError, match="multiple of 8"):
        fusion.align_sequences(Tensor(np.ones((9, 3))), Tensor(np.ones((9, 5))), wfm, 12)


def test_wfm_output_shapes(wfm):
    rng = np.random.default_rng(3)
    f_va, f_av = fusion.wfm_forward(Tensor(rng.normal(size=(10, 3))), Tensor(rng.normal(size=(30, 5))),
                                    wfm, 16)
    assert f_va.shape == f_av.shape == (16, 6)


def test_freq_interact_is_distribution_over_features():
    rng = np.random.default_rng(4)
    out = fusion.freq_interact(Tensor(rng.normal(size=(14, 6))), Tensor(rng.normal(size=(14, 6)))).data
    np.testing.assert_allclose(out.sum(-1), 1.0)
    with pytest.raises(ShapeError):
        fusion.freq_interact(Tensor(np.ones((3, 2))), Tensor(np.ones((3, 4))))


def test_reconstruct_inverts_untouched_bands():
    x = np.random.default_rng(5).normal(size=(6, 32))
    pyr = wavelet.dwt_multilevel(Tensor(x), 3)
    back = fusion.reconstruct(pyr.low, wavelet.concat_highs(pyr), 32, 3)
    np.testing.assert_allclose(back.data, x, atol=1e-12)


def test_odd_model_width_rejected():
    with pytest.raises(ConfigError, match="even"):
        fusion.init_wfm(np.random.default_rng(0), 2, 2, 5)


def test_cross_map_width_mismatch(wfm):
    with pytest.raises(ConfigError, match="BiLSTM"):
        fusion.cross_map(Tensor(np.ones((7, 4))), wfm.bilstm_video)
