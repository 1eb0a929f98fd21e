import numpy as np
import pytest

from motioncodes.errors import ConfigurationError, StructuralError
from motioncodes.kinematics import fk_positions_6d, root_trajectory
from motioncodes.synthetic import (
    CONTENT_NAMES,
    STYLE_TABLE,
    generate_synthetic,
    style_params,
)

_STD_FRAMES = 240  # 8 s at 30 fps, the standard calibration clip


def test_generator_is_deterministic():
    a = generate_synthetic(1, 3, 50, seed=11)
    b = generate_synthetic(1, 3, 50, seed=11)
    for name in ("p", "r6", "v", "w", "h", "up"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name
    c = generate_synthetic(1, 3, 50, seed=12)
    assert not np.array_equal(a.p, c.p)


def test_all_contents_and_styles_validate():
    for content in range(len(CONTENT_NAMES)):
        for style in range(len(STYLE_TABLE)):
            clip = generate_synthetic(content, style, 20, seed=content * 10 + style)
            clip.validate()
            assert clip.style_label == STYLE_TABLE[style].name


def test_root_position_channel_is_zero():
    clip = generate_synthetic(0, 2, 30, seed=6)
    assert np.max(np.abs(clip.p[:, 0])) < 1e-12


def test_fk_of_stored_rotations_reproduces_stored_positions():
    clip = generate_synthetic(2, 3, 40, seed=8)
    pos = fk_positions_6d(clip.r6, clip.p[:, 0], clip.skeleton)
    assert np.max(np.abs(pos - clip.p)) < 1e-8


def test_same_content_same_seed_trajectories_agree_across_styles():
    # spec'd calibration: <= 5 cm RMS across styles at equal content and seed
    for content in range(len(CONTENT_NAMES)):
        base = root_trajectory(generate_synthetic(content, 0, _STD_FRAMES, seed=21))
        for style in range(1, len(STYLE_TABLE)):
            other = root_trajectory(generate_synthetic(content, style, _STD_FRAMES, seed=21))
            rms = np.sqrt(np.mean(np.sum((base - other) ** 2, axis=1)))
            assert rms <= 0.05, (content, style, rms)
            # horizontal paths are exactly shared
            assert np.max(np.abs(base[:, [0, 2]] - other[:, [0, 2]])) < 1e-9


def test_different_contents_diverge():
    # spec'd calibration: >= 50 cm RMS between contents at equal style and seed
    trajs = [
        root_trajectory(generate_synthetic(c, 1, _STD_FRAMES, seed=33))
        for c in range(len(CONTENT_NAMES))
    ]
    for a in range(len(trajs)):
        for b in range(a + 1, len(trajs)):
            rms = np.sqrt(np.mean(np.sum((trajs[a] - trajs[b]) ** 2, axis=1)))
            assert rms >= 0.5, (a, b, rms)


def test_straight_content_integrates_to_known_line():
    clip = generate_synthetic(0, 0, 60, seed=14)
    traj = root_trajectory(clip)
    expect_z = 1.2 * np.arange(60) / 30.0  # constant speed, Euler-sum exact
    assert np.max(np.abs(traj[:, 2] - expect_z)) < 1e-9
    assert np.max(np.abs(traj[:, 0])) < 1e-9
    assert np.array_equal(traj[:, 1], clip.h[:, 1])


def test_wide_style_spreads_the_knees():
    wide = generate_synthetic(0, 1, 60, seed=3)
    neutral = generate_synthetic(0, 0, 60, seed=3)

    def knee_gap(clip):
        pos = fk_positions_6d(clip.r6, clip.p[:, 0], clip.skeleton)
        l_shin = clip.skeleton.names.index("l_shin")
        r_shin = clip.skeleton.names.index("r_shin")
        return float(np.mean(np.linalg.norm(pos[:, l_shin] - pos[:, r_shin], axis=1)))

    assert knee_gap(wide) > knee_gap(neutral) + 0.15


def test_style_signatures_are_distinct():
    # arm-swing energy separates the swing and stiff styles by an order of magnitude
    def arm_energy(style):
        clip = generate_synthetic(0, style, 120, seed=7)
        l_arm = clip.skeleton.names.index("l_forearm")
        return float(np.std(clip.p[:, l_arm, 2]))

    assert arm_energy(2) > 8.0 * arm_energy(5)


def test_parametric_styles_beyond_table():
    p = style_params(31)
    assert p.name == "style31"
    q = style_params(31)
    assert p == q
    clip = generate_synthetic(0, 31, 16, seed=1)
    clip.validate()
    assert clip.style_label == "style31"


def test_bad_ids_raise():
    with pytest.raises(ConfigurationError):
        generate_synthetic(4, 0, 20)
    with pytest.raises(ConfigurationError):
        generate_synthetic(-1, 0, 20)
    with pytest.raises(ConfigurationError):
        style_params(-2)
    with pytest.raises(StructuralError):
        generate_synthetic(0, 0, 1)
