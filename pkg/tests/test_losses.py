import math

import numpy as np
import pytest

from mono3d.assignment import GridSpec
from mono3d.boxes import ABBox3D, Box2D
from mono3d.encoding import encode
from mono3d.geometry import backproject, rotation_y
from mono3d.losses import (
    LossWeights,
    compute_losses,
    cross_entropy,
    loss_2d,
    loss_corners,
    loss_depth,
    loss_joint,
    loss_location,
)
from mono3d.pipeline import default_grid, synth_frame
from mono3d.synth import KITTI_INTRINSICS, Perturbation

# 100x90 px cells; a 30 px scope around a cell center reaches no neighbor.
GRID = GridSpec(1200.0, 360.0, 12, 4, 30.0)
CELL = (1, 6)  # (iy, ix), center (650, 135)


@pytest.fixture
def gt(k700):
    box = ABBox3D((2.2, 0.4, 25.0), 1.5, 1.6, 3.9, 0.4)
    t = encode([(box, Box2D(650.0, 135.0, 80.0, 50.0))], k700, GRID)
    assert t.mask.sum() == 1 and t.mask[CELL]
    return t


def _confident(t):
    logits = np.where(t.mask[..., None], [-50.0, 50.0], [50.0, -50.0])
    out = t.copy()
    out.logits = logits
    return out


def test_perfect_prediction(gt, k700):
    rep = compute_losses(_confident(gt), gt, k700, GRID)
    assert rep.l_bbox == 0.0 and rep.l_conf < 1e-20
    for name in ("l_zc", "l_zdelta", "l_depth", "l_c2d", "l_c3d", "l_location", "l_corners", "l_joint"):
        assert getattr(rep, name) == 0.0


def test_uniform_logits(gt):
    pred = gt.copy()
    pred.logits = np.zeros(gt.shape + (2,))
    l_conf, _, _ = loss_2d(pred, gt)
    assert l_conf == pytest.approx(math.log(2.0), abs=1e-15)


def test_bbox_offset(gt):
    pred = gt.copy()
    pred.b2d[CELL] += [1.0, 1.0, 0.0, 0.0]
    assert loss_2d(pred, gt)[1] == 2.0


def test_depth_fixtures(gt):
    pred = gt.copy()
    pred.z_cc[CELL] += 2.0
    pred.delta_zc[CELL] = -2.0
    assert loss_depth(pred, gt) == (2.0, 0.0, 20.0)
    pred = gt.copy()
    pred.z_cc[CELL] += 1.0
    assert loss_depth(pred, gt) == (1.0, 1.0, 11.0)


def test_center_offset_induces_3d_error(gt, k700):
    pred = gt.copy()
    pred.delta_c[CELL] += [5.0, 0.0]
    l_c2d, l_c3d, l_loc = loss_location(pred, gt, k700, GRID)
    assert l_c2d == pytest.approx(5.0, abs=1e-12)
    # Backprojection is linear in u: 5 px at Z=25 with f=700.
    assert l_c3d == pytest.approx(5.0 * 25.0 / 700.0, abs=1e-12)
    assert l_loc == pytest.approx(50.0 + l_c3d, abs=1e-12)


def test_refinement_offset(gt, k700):
    pred = gt.copy()
    pred.delta_C[CELL] += [0.1, 0.0, 0.0]
    l_c2d, l_c3d, l_loc = loss_location(pred, gt, k700, GRID)
    assert l_c2d == 0.0
    assert l_c3d == pytest.approx(0.1, abs=1e-12) and l_loc == pytest.approx(0.1, abs=1e-12)


def test_corner_fixtures(gt):
    pred = gt.copy()
    pred.corners[CELL][:, 0] += 0.1
    assert loss_corners(pred, gt) == pytest.approx(0.8, abs=1e-12)
    pred = gt.copy()
    pred.corners[CELL] = gt.corners[CELL][[1, 2, 3, 0, 5, 6, 7, 4]]
    assert loss_corners(pred, gt) > 0.0


def test_joint_translation(gt, k700):
    pred = gt.copy()
    pred.delta_C[CELL] += [0.2, 0.0, 0.0]
    assert loss_joint(pred, gt, k700, GRID) == pytest.approx(8 * 0.2, abs=1e-12)


def test_joint_rotated_corner_error(gt, k700, rng):
    pred = gt.copy()
    d = rng.normal(0.0, 0.1, (8, 3))
    pred.corners[CELL] += d
    # Oracle: rotate the local errors by the bearing of the backprojected center.
    g = np.array([650.0, 135.0])
    C_s = backproject(g + gt.delta_c[CELL], gt.z_cc[CELL], k700)
    r = rotation_y(math.atan2(C_s[0], C_s[2]))
    expected = np.abs(d @ r.T).sum()
    assert loss_joint(pred, gt, k700, GRID) == pytest.approx(expected, abs=1e-12)
    assert expected != pytest.approx(np.abs(d).sum(), abs=1e-6)


def test_composites_with_default_weights(k700):
    grid = default_grid()
    fr = synth_frame(11, 0, KITTI_INTRINSICS, grid, noise=Perturbation(2, 0.05, 0.5, 2, 0.1, 0.05, 0.05, 0.1))
    fr.pred.z_cc[fr.gt.mask] += 0.7
    w = LossWeights(10.0, 10.0, 10.0)
    r = compute_losses(fr.pred, fr.gt, KITTI_INTRINSICS, grid, w)
    assert r.l_2d == r.l_conf + 10.0 * r.l_bbox
    assert r.l_depth == 10.0 * r.l_zc + r.l_zdelta
    assert r.l_location == 10.0 * r.l_c2d + r.l_c3d
    assert r.total == r.l_2d + r.l_depth + r.l_location + r.l_corners + r.l_joint
    assert min(r.l_bbox, r.l_zc, r.l_zdelta, r.l_c2d, r.l_c3d, r.l_corners, r.l_joint) > 0


def test_normalize_divides_by_assigned_cells():
    grid = default_grid()
    fr = synth_frame(2, 0, KITTI_INTRINSICS, grid, noise=Perturbation(corner_m=0.1, depth_m=0.5))
    n = int(fr.gt.mask.sum())
    a = compute_losses(fr.pred, fr.gt, KITTI_INTRINSICS, grid)
    b = compute_losses(fr.pred, fr.gt, KITTI_INTRINSICS, grid, normalize=True)
    assert b.l_corners == pytest.approx(a.l_corners / n, rel=1e-12)
    assert b.l_zdelta == pytest.approx(a.l_zdelta / n, rel=1e-12)


def test_weight_validation():
    with pytest.raises(ValueError):
        LossWeights(omega=0.0)
    with pytest.raises(ValueError):
        LossWeights(alpha=1.0)


# -- finite-difference subgradients -------------------------------------------

H = 1e-6


def _numeric(f, x0):
    return (f(x0 + H) - f(x0 - H)) / (2 * H)


@pytest.fixture
def noisy(gt, rng):
    pred = gt.copy()
    pred.b2d[CELL] += rng.uniform(0.5, 2.0, 4) * rng.choice([-1, 1], 4)
    pred.z_cc[CELL] += 1.3
    pred.delta_zc[CELL] = -0.4
    pred.delta_c[CELL] += [3.0, -2.0]
    pred.delta_C[CELL] += [0.05, -0.07, 0.11]
    pred.corners[CELL] += rng.uniform(0.02, 0.1, (8, 3)) * rng.choice([-1, 1], (8, 3))
    pred.logits = rng.normal(0.0, 1.0, gt.shape + (2,))
    return pred


def test_gradient_bbox(noisy, gt):
    diff = noisy.b2d[CELL] - gt.b2d[CELL]
    for j in range(4):
        def f(v, j=j):
            p = noisy.copy()
            p.b2d[CELL][j] = v
            return loss_2d(p, gt)[2]
        assert _numeric(f, noisy.b2d[CELL][j]) == pytest.approx(10.0 * np.sign(diff[j]), abs=1e-5)


def test_gradient_confidence(noisy, gt):
    labels = (gt.pr_obj > 0.5).astype(int)
    n = gt.mask.size
    z = noisy.logits[CELL]
    p = np.exp(z) / np.exp(z).sum()
    analytic = (p - np.eye(2)[labels[CELL]]) / n
    for j in range(2):
        def f(v, j=j):
            q = noisy.copy()
            q.logits = noisy.logits.copy()
            q.logits[CELL][j] = v
            return loss_2d(q, gt)[0]
        assert _numeric(f, z[j]) == pytest.approx(analytic[j], abs=1e-5)


def test_gradient_depth(noisy, gt):
    z_true = gt.z_cc[CELL]

    def f(v):
        p = noisy.copy()
        p.z_cc[CELL] = v
        return loss_depth(p, gt)[2]
    zc, dz = noisy.z_cc[CELL], noisy.delta_zc[CELL]
    analytic = 10.0 * np.sign(zc - z_true) + np.sign(zc + dz - z_true)
    assert _numeric(f, zc) == pytest.approx(analytic, abs=1e-5)


def test_gradient_location(noisy, gt, k700):
    # d l_c3d / d delta_c_u = sign(dX) * Z / f_x through the backprojection.
    def f(v):
        p = noisy.copy()
        p.delta_c[CELL][0] = v
        return loss_location(p, gt, k700, GRID)[2]
    g = np.array([650.0, 135.0])
    z = noisy.z_cc[CELL] + noisy.delta_zc[CELL]
    C_p = backproject(g + noisy.delta_c[CELL], z, k700) + noisy.delta_C[CELL]
    C_g = backproject(g + gt.delta_c[CELL], gt.z_cc[CELL], k700) + gt.delta_C[CELL]
    analytic = 10.0 * np.sign(noisy.delta_c[CELL][0] - gt.delta_c[CELL][0]) + np.sign(C_p[0] - C_g[0]) * z / 700.0
    assert _numeric(f, noisy.delta_c[CELL][0]) == pytest.approx(analytic, abs=1e-5)


def test_gradient_corners_and_joint(noisy, gt, k700):
    diff = noisy.corners[CELL] - gt.corners[CELL]
    for i, a in [(0, 0), (3, 1), (6, 2)]:
        def f(v, i=i, a=a):
            p = noisy.copy()
            p.corners[CELL][i, a] = v
            return loss_corners(p, gt) + loss_joint(p, gt, k700, GRID)
        # Joint term: sign of each rotated residual times the rotation column.
        g = np.array([650.0, 135.0])
        z = noisy.z_cc[CELL] + noisy.delta_zc[CELL]
        Cs_p = backproject(g + noisy.delta_c[CELL], z, k700)
        Cs_g = backproject(g + gt.delta_c[CELL], gt.z_cc[CELL], k700)
        r_p = rotation_y(math.atan2(Cs_p[0], Cs_p[2]))
        r_g = rotation_y(math.atan2(Cs_g[0], Cs_g[2]))
        cam_p = noisy.corners[CELL] @ r_p.T + Cs_p + noisy.delta_C[CELL]
        cam_g = gt.corners[CELL] @ r_g.T + Cs_g + gt.delta_C[CELL]
        analytic = np.sign(diff[i, a]) + np.sign(cam_p[i] - cam_g[i]) @ r_p[:, a]
        assert _numeric(f, noisy.corners[CELL][i, a]) == pytest.approx(analytic, abs=1e-5)


def test_cross_entropy_stable():
    ce = cross_entropy(np.array([[1000.0, -1000.0]]), np.array([1]))
    assert np.isfinite(ce).all() and ce[0] == pytest.approx(2000.0)
