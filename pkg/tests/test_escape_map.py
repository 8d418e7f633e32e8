import numpy as np
import pytest

from weierdim.dynamics import PREPOLE
from weierdim.errors import InvalidArgumentError
from weierdim.escape_map import GRAY, escape_map, pixel_grid, read_pgm, symmetry_agreement


@pytest.fixture(scope="module")
def small_map(ev, consts):
    return escape_map(ev, 1 + 0j, 0.05, 128, 5, consts.R1, threads=1)


def test_pixel_grid_orientation():
    g = pixel_grid(1 + 0j, 0.5, 4)
    assert g.shape == (4, 4)
    assert g[0, 0].imag > g[-1, 0].imag  # top row first
    assert g[0, 0].real < g[0, -1].real
    assert np.mean(g) == pytest.approx(1 + 0j)


def test_prepole_pixels_cluster_at_one(small_map):
    g = pixel_grid(small_map.center, small_map.radius, small_map.resolution)
    d = np.abs(g - 1)
    pre = small_map.codes == PREPOLE
    assert pre.any()
    inner, outer = pre[d < 0.01].mean(), pre[d > 0.035].mean()
    assert inner > outer
    assert small_map.codes[np.unravel_index(np.argmin(d), d.shape)] == PREPOLE


def test_thread_count_does_not_change_output(ev, consts, small_map):
    again = escape_map(ev, 1 + 0j, 0.05, 128, 5, consts.R1, threads=3)
    assert again.to_pgm() == small_map.to_pgm()


def test_symmetry_agreement(ev, consts, small_map):
    assert symmetry_agreement(ev, small_map, consts.R1, n_pixels=1000) == 1.0


def test_pgm_round_trip(small_map):
    text = small_map.to_pgm()
    assert text.startswith("P2\n")
    assert all(len(line) <= 70 for line in text.splitlines())
    gray = read_pgm(text)
    expected = np.vectorize(GRAY.get)(small_map.codes)
    assert np.array_equal(gray, expected)


def test_summary_csv(small_map):
    lines = small_map.summary_csv(0.99).splitlines()
    assert lines[0] == "class,gray,count,fraction"
    counts = sum(int(l.split(",")[2]) for l in lines[1:5])
    assert counts == small_map.codes.size
    assert lines[-1].startswith("symmetry_agreement")


def test_resolution_guard(ev):
    with pytest.raises(InvalidArgumentError):
        escape_map(ev, 1, 0.05, 2**14 + 1, 5, 3.0)
    with pytest.raises(InvalidArgumentError):
        escape_map(ev, 1, 0.0, 16, 5, 3.0)
