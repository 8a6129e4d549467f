import numpy as np
import pytest

from sensing.selection import SensorSelection, dice, load_selection, parse_selection_line, save_selection
from sensing.utils import InputError


def sel(*indices, n=10):
    return SensorSelection(tuple(indices), n)


def test_selection_matrix_picks_rows():
    s = sel(3, 0, n=4)
    np.testing.assert_array_equal(s.matrix(), [[0, 1], [0, 0], [0, 0], [1, 0]])
    u = np.arange(4.0) * 10
    np.testing.assert_array_equal(s.measure(u), [30.0, 0.0])
    np.testing.assert_array_equal(s.matrix().T @ u, s.measure(u))


def test_operator_is_rows_of_basis():
    phi = np.arange(12.0).reshape(4, 3)
    np.testing.assert_array_equal(sel(2, 1, n=4).operator(phi), phi[[2, 1]])


def test_invalid_indices():
    with pytest.raises(InputError, match="distinct"):
        sel(1, 1)
    with pytest.raises(InputError, match="out of range"):
        sel(10)
    with pytest.raises(InputError, match="out of range"):
        sel(-1)


def test_dice():
    assert dice(sel(0, 1), sel(1, 0)) == 1.0
    assert dice(sel(0, 1), sel(2, 3)) == 0.0
    assert dice(sel(0, 1, 2), sel(1, 2, 3)) == pytest.approx(2 / 3)
    assert dice(sel(), sel()) == 1.0
    with pytest.raises(InputError, match="different grids"):
        dice(sel(0, n=5), sel(0, n=6))


def test_csv_line_keeps_order_and_seed():
    line = sel(4, 1, 7).to_csv_line("cpqr", seed=3)
    assert line == "cpqr,3,10,3,4,1,7"
    method, seed, parsed = parse_selection_line(line)
    assert (method, seed, parsed.indices, parsed.n_locations) == ("cpqr", 3, (4, 1, 7), 10)
    assert parse_selection_line(sel(2).to_csv_line("greedy_d"))[1] is None


def test_csv_line_count_mismatch():
    with pytest.raises(InputError, match="k=3"):
        parse_selection_line("cpqr,3,10,,1,2")


def test_selection_file_skips_comments(tmp_path):
    path = tmp_path / "sel.csv"
    save_selection(sel(5, 2), str(path), "qmap", seed=1)
    path.write_text("# method,k,N,seed,indices\n" + path.read_text())
    method, seed, loaded = load_selection(str(path))
    assert method == "qmap" and seed == 1 and loaded.indices == (5, 2)
