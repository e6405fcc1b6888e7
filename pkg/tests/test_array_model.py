import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermohaptics.acoustic_field import pressure_at
from thermohaptics.array_model import (
    TWO_PI,
    ArrayBuildConfig,
    ArrayLayout,
    DriveSolution,
    Transducer,
    build_dual_array,
    focus_phases,
)
from thermohaptics.errors import LayoutError, NearFieldError


def test_default_layout_matches_dual_array(layout):
    assert len(layout) == 498
    assert layout.frequency == 40e3
    assert np.allclose(layout.normals, [0, 0, 1])
    assert 8.4e-3 <= layout.wavelength <= 8.9e-3


def test_default_layout_is_mirror_symmetric(layout):
    pos = {tuple(np.round(p, 12)) for p in layout.positions}
    for x, y, z in pos:
        assert (round(-x, 12) + 0.0, y, z) in pos
        assert (x, round(-y, 12) + 0.0, z) in pos


def test_single_element_grid():
    cfg = ArrayBuildConfig(rows=1, cols=1, n_arrays=1, corner_cut=0, origin=(0.01, -0.02, 0.003))
    lay = build_dual_array(cfg)
    assert len(lay) == 1
    assert lay.transducers[0].position == pytest.approx((0.01, -0.02, 0.003))


def test_small_dual_grid_min_distance_by_enumeration():
    lay = build_dual_array(ArrayBuildConfig(rows=3, cols=3, pitch=10e-3, corner_cut=0))
    assert len(lay) == 18
    best = min(math.dist(a, b) for a, b in itertools.combinations(lay.positions.tolist(), 2))
    assert best == pytest.approx(10e-3, abs=1e-12)


@pytest.mark.parametrize("pitch", [0.0, -1e-3])
def test_rejects_non_positive_pitch(pitch):
    with pytest.raises(LayoutError):
        build_dual_array(ArrayBuildConfig(pitch=pitch))


def test_rejects_overlapping_footprints():
    with pytest.raises(LayoutError, match="overlap"):
        build_dual_array(ArrayBuildConfig(rows=3, cols=3, pitch=8e-3, radius=5e-3, corner_cut=0))


def test_rejects_shared_position():
    t = Transducer((0.0, 0.0, 0.0))
    with pytest.raises(LayoutError, match="share"):
        ArrayLayout((t, t))


def test_transducer_invariants():
    with pytest.raises(LayoutError):
        Transducer((0, 0, 0), normal=(0, 0, 2))
    with pytest.raises(LayoutError):
        Transducer((0, 0, 0), radius=0)
    with pytest.raises(LayoutError):
        Transducer((0, 0, 0), ref_amplitude=-1)


def test_equidistant_pair_gets_identical_phases():
    lay = ArrayLayout((Transducer((-0.02, 0.0, 0.0)), Transducer((0.02, 0.0, 0.0))))
    d = focus_phases(lay, (0.0, 0.05, 0.1))
    assert d.phases[0] == d.phases[1]


def test_full_wavelength_path_gives_zero_phase():
    lay = ArrayLayout((Transducer((0.0, 0.0, 0.0)),))
    d = focus_phases(lay, (0.0, 0.0, lay.wavelength))
    assert d.phases[0] == 0.0


def test_phases_in_range_and_cophasal(layout, drive):
    assert drive.phases.shape == (498,)
    assert np.all((drive.phases >= 0) & (drive.phases < TWO_PI))
    dist = np.linalg.norm(layout.positions - np.array([0, 0, 0.2]), axis=1)
    arrival = np.mod(layout.wavenumber * dist + drive.phases, TWO_PI)
    err = np.minimum(arrival, TWO_PI - arrival)
    assert err.max() < 1e-9


def test_focus_too_close_is_rejected(layout):
    p = layout.positions[17] + np.array([0, 0, 0.5 * layout.wavelength])
    with pytest.raises(NearFieldError) as exc:
        focus_phases(layout, p)
    assert exc.value.transducer_index == 17


def test_focus_beats_random_phases(layout, drive, rng):
    focus = (0, 0, 0.2)
    best = abs(pressure_at(layout, drive, focus))
    for _ in range(1000):
        rnd = DriveSolution(rng.uniform(0, TWO_PI, len(layout)))
        assert abs(pressure_at(layout, rnd, focus)) < best


def test_drive_solution_validation():
    with pytest.raises(ValueError):
        DriveSolution([0.0, TWO_PI])
    with pytest.raises(ValueError):
        DriveSolution([0.0], base_amplitude=1.5)


def _circular_diff(a, b):
    d = np.mod(a - b, TWO_PI)
    return np.minimum(d, TWO_PI - d)


@settings(max_examples=25, deadline=None)
@given(
    st.tuples(*[st.floats(-0.5, 0.5)] * 3),
    st.tuples(st.floats(-0.05, 0.05), st.floats(-0.05, 0.05), st.floats(0.05, 0.4)),
)
def test_translation_equivariance(offset, focus):
    lay = build_dual_array(ArrayBuildConfig(rows=4, cols=5))
    base = focus_phases(lay, focus)
    moved = focus_phases(lay.translated(offset), np.add(focus, offset))
    assert _circular_diff(base.phases, moved.phases).max() < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.1, 0.1), st.floats(0.05, 0.4))
def test_mirror_symmetric_layout_gives_mirror_phases(y, z):
    lay = build_dual_array(ArrayBuildConfig(rows=5, cols=6, corner_cut=2))
    d = focus_phases(lay, (0.0, y, z))
    pos = lay.positions
    for i, p in enumerate(pos):
        j = int(np.argmin(np.linalg.norm(pos - p * np.array([-1, 1, 1]), axis=1)))
        assert _circular_diff(d.phases[i], d.phases[j]) < 1e-9
