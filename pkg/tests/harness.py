"""Synthetic 2D-3D correspondence sets shared by the estimation tests."""

import math

import numpy as np

from rovo.geometry import RigidTransform
from rovo.world import tangent_noise

EMPTY = (np.zeros((0, 3)), np.zeros((0, 3)))


def shuffle_points(X, rate, rng):
    """Corrupt a fraction of the correspondences by cyclically swapping their points.

    The corrupted set is a prefix of one random permutation, so for a fixed
    stream a higher rate corrupts a superset of a lower rate's points.
    """
    X = X.copy()
    k = int(round(rate * len(X)))
    idx = rng.permutation(len(X))[:k] if k >= 2 else np.zeros(0, dtype=int)
    X[idx] = np.roll(X[idx], 1, axis=0)
    return X, idx


def correspondences(rig, seed, per_cam=60, noise=0.0, rates=(0.0, 0.0, 0.0, 0.0), near=2.0, far=10.0):
    """Ground-truth body pose and per-camera ``(bearings, world points)``.

    Points lie in each camera's field of view at ranges uniform in
    ``[near, far]``.  Returns ``(pose, corr, outlier_indices)``.
    """
    rng = np.random.default_rng(seed)
    # separate stream so the noise is identical across outlier rates
    rng_out = np.random.default_rng([seed, 99])
    pose = RigidTransform(rng.normal(0, 0.1, 3), rng.normal(0, 1, 3))
    corr, bad = [], []
    for c, E in enumerate(rig.extrinsics):
        d = rng.normal(size=(per_cam, 3))
        d[:, 2] = np.abs(d[:, 2]) + 0.3
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        Xc = d * rng.uniform(near, far, per_cam)[:, None]
        Xw = pose.inverse().apply(E.inverse().apply(Xc))
        b = tangent_noise(d, noise, rng)
        Xw, idx = shuffle_points(Xw, rates[c], rng_out)
        corr.append((b, Xw))
        bad.append(idx)
    return pose, corr, bad


def translation_error(a, b):
    return float(np.linalg.norm(a.center - b.center))


def rotation_error(a, b):
    from rovo.geometry import rotation_angle_between

    return rotation_angle_between(a.matrix, b.matrix)


NOISE_005 = math.radians(0.05)


def small_window(rig, seed, n_frames=3, n_landmarks=25, noise=0.0, capacity=10):
    """Window over a short forward motion with landmarks scattered around the rig.

    Returns ``(window, true_poses, true_landmarks)``; the window holds the
    true values and bearings carry ``noise`` radians of tangent noise.
    """
    from rovo.backend import FrameState, WindowState

    rng = np.random.default_rng(seed)
    poses = [RigidTransform(rng.normal(0, 0.02, 3), np.array([-0.5 * k, 0.0, 0.0]) + rng.normal(0, 0.05, 3)) for k in range(n_frames)]
    az = rng.uniform(0, 2 * math.pi, n_landmarks)
    rad = rng.uniform(3.0, 12.0, n_landmarks)
    X = np.column_stack([rad * np.cos(az), rad * np.sin(az), rng.uniform(-1.5, 2.0, n_landmarks)])
    of, oc, ol, ob = [], [], [], []
    for k, T in enumerate(poses):
        for c, E in enumerate(rig.extrinsics):
            Xc = (E * T).apply(X)
            vis = np.arctan2(np.hypot(Xc[:, 0], Xc[:, 1]), Xc[:, 2]) <= rig.intrinsics[c].fov_max
            b = Xc[vis] / np.linalg.norm(Xc[vis], axis=1, keepdims=True)
            b = tangent_noise(b, noise, rng)
            of += [k] * len(b)
            oc += [c] * len(b)
            ol += np.flatnonzero(vis).tolist()
            ob.append(b)
    w = WindowState(
        [FrameState(k, T) for k, T in enumerate(poses)],
        {i: X[i].copy() for i in range(n_landmarks)},
        list(rig.extrinsics),
        np.array(of, dtype=np.int64),
        np.array(oc, dtype=np.int64),
        np.array(ol, dtype=np.int64),
        np.vstack(ob),
        capacity,
    )
    return w, poses, X
