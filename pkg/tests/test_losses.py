# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import math

import numpy as np
import pytest

from promptvit.core import ShapeMismatch, backward, new_graph, tensor
from promptvit.losses import (
    ClassOutOfRange,
    DegenerateBoxWarning,
    EmptyBatch,
    LossWeights,
    box_loss,
    depth_loss,
    downstream_loss,
    giou,
    normal_loss,
    pose_loss,
    segm_loss,
    total_loss,
)
from promptvit.util import InvalidConfig


def test_giou_of_identical_boxes_is_one():
    assert abs(giou([0.0, 0.0, 1.0, 1.0], [0.0, 0.0, 1.0, 1.0]).item() - 1.0) < 1e-12


def test_giou_of_disjoint_boxes():
    # union 2, enclosing hull 3
    value = giou([0.0, 0.0, 1.0, 1.0], [2.0, 0.0, 3.0, 1.0]).item()
    assert abs(value - (-1.0 / 3.0)) < 1e-12


def test_giou_rows():
    a = np.array([[0.0, 0.0, 1.0, 1.0], [0.0, 0.0, 2.0, 2.0]])
    b = np.array([[0.0, 0.0, 1.0, 1.0], [1.0, 1.0, 2.0, 2.0]])
    out = giou(a, b).value
    assert out.shape == (2,)
    assert np.allclose(out, [1.0, 0.25])


def test_giou_degenerate_pair_scores_zero():
    with pytest.warns(DegenerateBoxWarning):
        value = giou([0.5, 0.5, 0.5, 0.5], [0.5, 0.5, 0.5, 0.5])
    assert value.item() == 0.0
    assert np.all(np.isfinite(value.value))


def test_box_loss():
    gt = np.array([[0.1, 0.1, 0.4, 0.4], [0.5, 0.5, 0.9, 0.8]])
    assert abs(box_loss(tensor(gt), gt).item()) < 1e-12
    shifted = gt + np.array([0.1, 0.0, 0.1, 0.0])
    # each slot: L1 of 0.2 plus 1 - GIoU
    expected = np.mean([0.2 + 1.0 - giou(shifted[i], gt[i]).item() for i in range(2)])
    assert abs(box_loss(tensor(shifted), gt).item() - expected) < 1e-12


def test_depth_loss_below_clip():
    gt = np.full((1, 2, 2, 1), 3.0)
    assert abs(depth_loss(tensor(gt + 1.0), gt).item() - 1.0) < 1e-12


def test_depth_loss_clips_far_values():
    gt = np.full((1, 2, 2, 1), 12.0)
    assert depth_loss(tensor(np.full((1, 2, 2, 1), 15.0)), gt).item() == 0.0
    pred = tensor(np.full((1, 2, 2, 1), 15.0), requires_grad=True)
    with new_graph():
        grads = backward(depth_loss(pred, gt), wrt=[pred])
    assert np.array_equal(grads[pred], np.zeros(pred.shape))


def test_depth_loss_averages_frames():
    gt = np.zeros((2, 1, 1, 1))
    pred = np.array([0.0, 2.0]).reshape(2, 1, 1, 1)
    assert abs(depth_loss(tensor(pred), gt).item() - 2.0) < 1e-12


def test_normal_loss_sums_channels():
    gt = np.zeros((1, 1, 1, 3))
    assert abs(normal_loss(tensor(np.ones((1, 1, 1, 3))), gt).item() - 3.0) < 1e-12
    with pytest.raises(ShapeMismatch):
        normal_loss(tensor(np.ones((1, 1, 1, 1))), np.zeros((1, 1, 1, 1)))


def test_segm_loss_uniform_logits():
    logits = tensor(np.zeros((1, 2, 2, 4)))
    classes = np.array([[[0, 1], [2, 3]]])
    assert abs(segm_loss(logits, classes).item() - math.log(4)) < 1e-12
    with pytest.raises(ClassOutOfRange):
        segm_loss(logits, np.array([[[0, 1], [2, 4]]]))


def test_pose_loss_prefactor():
    gt = np.zeros((1, 75))
    assert abs(pose_loss(tensor(np.full((1, 75), 2.0)), gt).item() - 4.0) < 1e-12


def test_downstream_loss_rejects_bad_label():
    with pytest.raises(ClassOutOfRange):
        downstream_loss(tensor(np.zeros(8)), 8)
    assert abs(downstream_loss(tensor(np.zeros(8)), 3).item() - math.log(8)) < 1e-12


def test_loss_weights_validation():
    assert LossWeights().weight("pose") == 3.0
    with pytest.raises(InvalidConfig):
        LossWeights(segm=-0.1)
    with pytest.raises(InvalidConfig):
        LossWeights(depth_clip=0.0)


def test_total_loss_masks_absent_annotations():
    logits = tensor(np.zeros(8), requires_grad=True)
    pose_pred = tensor(np.ones((1, 75)), requires_grad=True)
    depth_pred = tensor(np.ones((2, 2, 2, 1)), requires_grad=True)
    predictions = [
        {"dt": logits, "pose": pose_pred, "depth": depth_pred},
        {"dt": logits, "pose": pose_pred, "depth": depth_pred},
    ]
    annotations = [{"dt": 1, "depth": np.zeros((2, 2, 2, 1))}, {"depth": np.full((2, 2, 2, 1), 3.0)}]
    with new_graph():
        report = total_loss(predictions, annotations)
        grads = backward(report.total, wrt=[logits, pose_pred, depth_pred])

    assert report.counts == {"dt": 1, "depth": 2}
    assert "pose" not in report.values
    assert abs(report.values["depth"] - (1.0 + 4.0) / 2) < 1e-12
    assert abs(report.values["dt"] - math.log(8)) < 1e-12
    expected_total = 1.0 * math.log(8) + 0.5 * 2.5
    assert abs(report.total_value - expected_total) < 1e-12
    assert abs(sum(report.contributions.values()) - expected_total) < 1e-12
    assert np.array_equal(grads[pose_pred], np.zeros(pose_pred.shape))
    assert np.any(grads[depth_pred] != 0)


def test_total_loss_errors():
    with pytest.raises(EmptyBatch):
        total_loss([], [])
    with pytest.raises(EmptyBatch):
        total_loss([{"dt": tensor(np.zeros(8))}], [{}])
    with pytest.raises(ValueError):
        total_loss([{"dt": tensor(np.zeros(8))}], [{"pose": np.zeros((1, 75))}])
    with pytest.raises(ShapeMismatch):
        total_loss([{"dt": tensor(np.zeros(8))}], [])
