"""Linear state-action feature maps."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Feature matrix ``psi`` of shape (S*A, d), rows in linearized pair order."""

    psi: np.ndarray
    num_states: int
    num_actions: int

    def __post_init__(self):
        psi = np.array(self.psi, dtype=float)
        if psi.ndim != 2 or psi.shape[0] != self.num_states * self.num_actions:
            raise ValueError(
                f"psi must have {self.num_states * self.num_actions} rows, got shape {psi.shape}"
            )
        if not np.all(np.isfinite(psi)):
            raise ValueError("feature vectors must be finite")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "feature_bound", float(np.max(np.linalg.norm(psi, axis=1))))

    @property
    def dim(self) -> int:
        return self.psi.shape[1]

    def vector(self, x: int, a: int) -> np.ndarray:
        return self.psi[x * self.num_actions + a]

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "dim": self.dim,
            "psi": self.psi.reshape(-1).tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureMap":
        S, A, d = int(doc["num_states"]), int(doc["num_actions"]), int(doc["dim"])
        return cls(np.asarray(doc["psi"], dtype=float).reshape(S * A, d), S, A)

    @classmethod
    def from_json(cls, text: str) -> "FeatureMap":
        return cls.from_dict(json.loads(text))


def tabular_features(S: int, A: int) -> FeatureMap:
    return FeatureMap(np.eye(S * A), S, A)


def constant_features(S: int, A: int) -> FeatureMap:
    """A single all-ones feature: the coarsest possible approximation."""
    return FeatureMap(np.ones((S * A, 1)), S, A)


def deepsea_state_index(N: int, i: int, j: int) -> int:
    return i * N + j


def deepsea_features(N: int) -> FeatureMap:
    """Row/column one-hots placed in the block of the chosen action.

    The state vector has length 2N (row one-hot, then column one-hot); the
    state-action vector has one such block per action, so d = 4N.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    A = 2
    psi = np.zeros((N * N * A, 4 * N))
    for i in range(N):
        for j in range(N):
            x = deepsea_state_index(N, i, j)
            for a in range(A):
                row = psi[x * A + a]
                row[a * 2 * N + i] = 1.0
                row[a * 2 * N + N + j] = 1.0
    return FeatureMap(psi, N * N, A)


def moment_matrix(features: FeatureMap, nu: np.ndarray) -> np.ndarray:
    """Psi^T diag(nu) Psi."""
    nu = np.asarray(nu, dtype=float)
    return features.psi.T @ (nu[:, None] * features.psi)


def feature_row_space(features: FeatureMap) -> np.ndarray:
    """Orthonormal basis (d x r) of the directions that change some Psi w."""
    _, sv, vt = np.linalg.svd(features.psi, full_matrices=False)
    tol = max(features.psi.shape) * np.finfo(float).eps * sv[0]
    return vt[sv > tol].T


def excitation(features: FeatureMap, nu: np.ndarray) -> float:
    """Smallest eigenvalue of the nu-weighted feature moment matrix.

    The moment matrix is restricted to the row space of Psi: weight
    directions with ``Psi w = 0`` change no value and are not data-dependent
    (DeepSea block features have two such directions). For full-rank
    features this is the plain smallest eigenvalue. A data distribution
    excites the features at level sigma when the result is at least sigma.
    """
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (features.psi.shape[0],):
        raise ValueError("nu must be a length-SA vector")
    if np.any(nu < 0) or abs(nu.sum() - 1.0) > 1e-10:
        raise ValueError("nu must be a probability vector")
    basis = feature_row_space(features)
    eig = np.linalg.eigvalsh(basis.T @ moment_matrix(features, nu) @ basis)
    # rank-deficient moments come back as +-1e-17 noise
    if eig[0] <= 1e-13 * max(eig[-1], 1.0):
        return 0.0
    return float(eig[0])
