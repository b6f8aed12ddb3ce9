"""Shared random fixtures-by-value for the test modules."""

import numpy as np


def random_rotation(rng, max_angle=np.pi):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0, max_angle)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def random_pose(rng, max_trans=50.0, max_angle=np.radians(30)):
    pose = np.eye(4)
    pose[:3, :3] = random_rotation(rng, max_angle)
    pose[:3, 3] = rng.uniform(-max_trans, max_trans, 3)
    return pose
