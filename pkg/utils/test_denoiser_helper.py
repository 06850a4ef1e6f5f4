#!/usr/bin/env python3
"""
Tests for the toy denoisers used in place of the trained network
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from agents.diffusion_agent import add_noise, ddim_step, make_schedule, x0_eps_from_v
from utils.denoiser_helper import (
    DenoiserHelper,
    OracleDenoiser,
    PriorDenoiser,
    SeamProbeDenoiser,
    seam_probe_denoiser,
)
from utils.errors import ContractViolation, InvalidArgument

SCHEDULE = make_schedule()


def _x0(denoiser, z_t, known_map, z_masked, t, **kwargs):
    v = denoiser(z_t, known_map, z_masked, t, **kwargs)
    return x0_eps_from_v(z_t, v, SCHEDULE.abar(t))[0]


def test_oracle_predicts_target_window():
    rng = np.random.default_rng(0)
    target = rng.standard_normal((10, 4, 2, 2))
    z_t = rng.standard_normal((3, 4, 2, 2))
    frames = np.array([4, 5, 6])
    x0 = _x0(OracleDenoiser(target, SCHEDULE), z_t, np.zeros((3, 2, 2)), np.zeros_like(z_t), 500,
             frames=frames)
    assert np.allclose(x0, target[frames], atol=1e-10)


def test_window_shape_checked():
    target = np.zeros((10, 4, 2, 2))
    with pytest.raises(ContractViolation):
        OracleDenoiser(target, SCHEDULE)(np.zeros((3, 4, 2, 2)), np.zeros((3, 2, 2)),
                                         np.zeros((3, 4, 2, 2)), 500)


def test_prior_follows_known_cells():
    prior = np.full((1, 4, 1, 2), 0.3)
    z_masked = np.full((1, 4, 1, 2), 0.9)
    known_map = np.array([[[1.0, 0.5]]])
    x0 = _x0(PriorDenoiser(prior, SCHEDULE), np.zeros((1, 4, 1, 2)), known_map, z_masked, 250)
    assert np.allclose(x0[..., 0], 0.9)
    assert np.allclose(x0[..., 1], 0.3)


def test_seam_offset_sign_follows_window_parity():
    prior = np.zeros((2, 4, 1, 1))
    seam = SeamProbeDenoiser(prior, amplitude=0.1, inertia=0.0, schedule=SCHEDULE)
    z_t = np.zeros((2, 4, 1, 1))
    hole = np.zeros((2, 1, 1))
    even = _x0(seam, z_t, hole, z_t, 750, window=0)
    odd = _x0(seam, z_t, hole, z_t, 750, window=1)
    assert np.allclose(even, 0.1)
    assert np.allclose(odd, -0.1)
    known = _x0(seam, z_t, np.ones((2, 1, 1)), z_t, 750, window=1)
    assert np.allclose(known, 0.0)


def test_seam_offset_keeps_committed_offset():
    rng = np.random.default_rng(1)
    z_T = rng.standard_normal((1, 4, 1, 1))
    hole = np.zeros((1, 1, 1))
    seam = seam_probe_denoiser(np.zeros((1, 4, 1, 1)), 0.1, inertia=0.5, schedule=SCHEDULE)
    first_t = SCHEDULE.inference_indices[0]
    v = seam(z_T, hole, np.zeros_like(z_T), first_t, window=0)
    x0, eps = x0_eps_from_v(z_T, v, SCHEDULE.abar(first_t))
    # pure noise carries no offset yet: the first step starts from the window's own
    assert np.allclose(x0, 0.1, atol=1e-9)
    # a state that already carries the opposite offset
    next_t = SCHEDULE.inference_indices[1]
    z_t = add_noise(np.full((1, 4, 1, 1), -0.1), eps, SCHEDULE.abar(next_t))
    x0 = _x0(seam, z_t, hole, np.zeros_like(z_t), next_t, window=0)
    assert np.allclose(x0, 0.5 * 0.1 + 0.5 * -0.1, atol=1e-9)
    # a new trajectory forgets the previous one
    again = _x0(seam, z_T, hole, np.zeros_like(z_T), first_t, window=0)
    assert np.allclose(again, 0.1, atol=1e-9)


@pytest.mark.parametrize("window,expected", [(0, 0.1), (1, -0.1)])
def test_seam_offset_holds_full_amplitude_along_trajectory(window, expected):
    rng = np.random.default_rng(2)
    prior = np.full((3, 4, 1, 1), 0.5)
    hole = np.zeros((3, 1, 1))
    seam = seam_probe_denoiser(prior, 0.1, inertia=0.5, schedule=SCHEDULE)
    z_t = rng.standard_normal(prior.shape)
    for ordinal in range(1, SCHEDULE.inference_steps + 1):
        t, abar_t, abar_prev = SCHEDULE.step_pair(ordinal)
        v = seam(z_t, hole, np.zeros_like(z_t), t, window=window)
        assert np.allclose(x0_eps_from_v(z_t, v, abar_t)[0], 0.5 + expected, atol=1e-9)
        z_t = ddim_step(z_t, v, abar_t, abar_prev)
    assert np.allclose(z_t, 0.5 + expected, atol=1e-9)


def test_seam_offset_arguments_validated():
    with pytest.raises(InvalidArgument):
        SeamProbeDenoiser(np.zeros((1, 4, 1, 1)), amplitude=-0.1)
    with pytest.raises(InvalidArgument):
        SeamProbeDenoiser(np.zeros((1, 4, 1, 1)), amplitude=0.1, inertia=1.0)


def test_helper_builds_each_kind():
    helper = DenoiserHelper(SCHEDULE)
    prior = np.zeros((1, 4, 1, 1))
    assert isinstance(helper.create("oracle", target=prior), OracleDenoiser)
    assert isinstance(helper.create("prior", prior=prior), PriorDenoiser)
    assert isinstance(helper.create("seam_probe", prior=prior, amplitude=0.2), SeamProbeDenoiser)
    with pytest.raises(InvalidArgument):
        helper.create("oracle")
    with pytest.raises(InvalidArgument):
        helper.create("unet", prior=prior)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
