"""System models, trajectory simulation and the offline data batch.

The data batch (``DataMatrices``) is the only thing the optimizer looks at;
``SystemModel`` exists to generate data and to compute model-based oracles.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import linalg
from .errors import (
    DimensionMismatch,
    GenerationFailure,
    InsufficientData,
    NotPSD,
    ParseError,
    RankDeficient,
)

FORMAT_NAME = "deepo-data-batch"
FORMAT_VERSION = 1


def _frozen(a, ndim: int = 2) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim != ndim:
        raise DimensionMismatch(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SystemModel:
    """Discrete-time LTI system ``x(t+1) = A x(t) + B u(t)`` with LQR weights."""

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray = None
    R: np.ndarray = None

    def __post_init__(self):
        A = _frozen(self.A)
        B = _frozen(self.B)
        n, m = B.shape
        if A.shape != (n, n):
            raise DimensionMismatch(f"A is {A.shape} but B is {B.shape}")
        Q = np.eye(n) if self.Q is None else linalg.sym(self.Q)
        R = np.eye(m) if self.R is None else linalg.sym(self.R)
        if Q.shape != (n, n) or R.shape != (m, m):
            raise DimensionMismatch(f"Q {Q.shape} / R {R.shape} do not match n={n}, m={m}")
        for W in (Q, R):
            lam = linalg.min_eig(W)
            if lam <= 0:
                raise NotPSD(lam)
        if linalg.matrix_rank(linalg.controllability_matrix(A, B)) != n:
            raise RankDeficient(0.0, "controllability matrix")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Q", _frozen(Q))
        object.__setattr__(self, "R", _frozen(R))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class Trajectory:
    """States ``x(0..T)`` as columns of an n x (T+1) array, inputs ``u(0..T-1)``
    as columns of an m x T array."""

    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        states = _frozen(self.states)
        inputs = _frozen(self.inputs)
        if states.shape[1] != inputs.shape[1] + 1:
            raise DimensionMismatch(
                f"{states.shape[1]} states for {inputs.shape[1]} inputs (need T+1 for T)"
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)

    @property
    def T(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class DataMatrices:
    """Offline batch ``(U_-, X_-, X_+)`` certified to satisfy the rank condition
    ``rank [U_-; X_-] = m + n``.

    Construction raises ``InsufficientData`` if ``T < m + n`` and
    ``RankDeficient`` if the stacked matrix loses rank.
    """

    U_minus: np.ndarray
    X_minus: np.ndarray
    X_plus: np.ndarray
    seed: int | None = None
    rank_tol: float = field(default=linalg.RANK_TOL, repr=False)

    def __post_init__(self):
        U, X, Xp = (_frozen(M) for M in (self.U_minus, self.X_minus, self.X_plus))
        if not (U.shape[1] == X.shape[1] == Xp.shape[1]) or X.shape != Xp.shape:
            raise DimensionMismatch(f"U_- {U.shape}, X_- {X.shape}, X_+ {Xp.shape}")
        object.__setattr__(self, "U_minus", U)
        object.__setattr__(self, "X_minus", X)
        object.__setattr__(self, "X_plus", Xp)
        if self.T < self.m + self.n:
            raise InsufficientData(self.T, self.m + self.n)
        s = np.linalg.svd(self.D_minus, compute_uv=False)
        if s[-1] <= self.rank_tol * max(1.0, s[0]):
            raise RankDeficient(s[-1], "D_- = [U_-; X_-]")

    @property
    def n(self) -> int:
        return self.X_minus.shape[0]

    @property
    def m(self) -> int:
        return self.U_minus.shape[0]

    @property
    def T(self) -> int:
        return self.X_minus.shape[1]

    @cached_property
    def D_minus(self) -> np.ndarray:
        return np.vstack([self.U_minus, self.X_minus])

    @cached_property
    def sigma_min_D(self) -> float:
        return float(np.linalg.svd(self.D_minus, compute_uv=False)[-1])

    @cached_property
    def D_pinv(self) -> np.ndarray:
        return linalg.right_pseudoinverse(self.D_minus, self.rank_tol)

    @cached_property
    def X_pinv(self) -> np.ndarray:
        return linalg.right_pseudoinverse(self.X_minus, self.rank_tol)

    @cached_property
    def Pi_Xminus(self) -> linalg.Projector:
        return linalg.nullspace_projector(self.X_minus, "X_-", self.rank_tol)

    @cached_property
    def Pi_Dminus(self) -> linalg.Projector:
        return linalg.nullspace_projector(self.D_minus, "D_-", self.rank_tol)

    def input_weight(self, R: np.ndarray) -> np.ndarray:
        """``U_-^T R U_-`` (T x T)."""
        return linalg.sym(self.U_minus.T @ np.asarray(R, dtype=float) @ self.U_minus)


def simulate(system: SystemModel, inputs, x0) -> Trajectory:
    """Roll the system forward from ``x0`` under ``inputs`` (m x T, or a
    sequence of T input vectors)."""
    if isinstance(inputs, (list, tuple)):
        U = np.column_stack([np.atleast_1d(np.asarray(u, dtype=float)) for u in inputs])
    else:
        U = np.atleast_2d(np.asarray(inputs, dtype=float))
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if U.shape[0] != system.m or x0.shape[0] != system.n:
        raise DimensionMismatch(f"inputs {U.shape} / x0 {x0.shape} for n={system.n}, m={system.m}")
    T = U.shape[1]
    if T < 1:
        raise DimensionMismatch("need at least one input")
    X = np.empty((system.n, T + 1))
    X[:, 0] = x0
    for t in range(T):
        X[:, t + 1] = system.A @ X[:, t] + system.B @ U[:, t]
    return Trajectory(X, U)


def assemble(trajectory: Trajectory, seed: int | None = None) -> DataMatrices:
    return assemble_from_experiments([trajectory], seed=seed)


def assemble_from_experiments(
    trajectories: Sequence[Trajectory], seed: int | None = None
) -> DataMatrices:
    """Stack the (x(t), u(t), x(t+1)) columns of several experiments."""
    if not trajectories:
        raise InsufficientData(0, 1)
    dims = {(tr.states.shape[0], tr.inputs.shape[0]) for tr in trajectories}
    if len(dims) != 1:
        raise DimensionMismatch(f"inconsistent (n, m) across experiments: {sorted(dims)}")
    U = np.hstack([tr.inputs for tr in trajectories])
    X = np.hstack([tr.states[:, :-1] for tr in trajectories])
    Xp = np.hstack([tr.states[:, 1:] for tr in trajectories])
    return DataMatrices(U, X, Xp, seed=seed)


def gaussian_batch(
    system: SystemModel, T: int, seed: int, max_tries: int = 100
) -> DataMatrices:
    """One trajectory of length ``T`` with i.i.d. standard normal ``x(0)`` and
    inputs, resampled until the rank certificate holds.

    Each attempt uses ``default_rng([seed, attempt])`` so the batch is a pure
    function of ``seed``.
    """
    if T < system.m + system.n:
        raise InsufficientData(T, system.m + system.n)
    last = None
    for attempt in range(max_tries):
        rng = np.random.default_rng([seed, attempt])
        x0 = rng.standard_normal(system.n)
        U = rng.standard_normal((system.m, T))
        try:
            return assemble(simulate(system, U, x0), seed=seed)
        except RankDeficient as exc:
            last = exc
    raise last


def random_system(
    n: int, m: int, target_rho: float = 0.8, seed: int = 0, max_retries: int = 100
) -> SystemModel:
    """Standard-normal (A, B) with A rescaled to spectral radius ``target_rho``;
    Q = I, R = I. Redraws until the pair is controllable."""
    if n < 1 or m < 1 or not target_rho > 0:
        raise ValueError("need n, m >= 1 and target_rho > 0")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        A = rng.standard_normal((n, n))
        B = rng.standard_normal((n, m))
        rho = linalg.spectral_radius(A)
        if rho == 0:
            continue
        A = A * (target_rho / rho)
        try:
            return SystemModel(A, B)
        except RankDeficient:
            continue
    raise GenerationFailure(f"no controllable pair after {max_retries} draws")


BENCHMARK_A = [
    [-0.137, 0.146, -0.297, 0.283],
    [0.487, 0.095, 0.417, 0.301],
    [-0.018, 0.049, 0.175, 0.435],
    [0.143, 0.317, -0.293, -0.107],
]
BENCHMARK_B = [
    [1.639, 0.930],
    [0.264, 1.793],
    [-1.464, -1.183],
    [-0.776, -0.111],
]


def benchmark_system() -> SystemModel:
    """The published n=4, m=2 benchmark (three-decimal entries), Q = I4, R = I2."""
    return SystemModel(np.array(BENCHMARK_A), np.array(BENCHMARK_B), np.eye(4), np.eye(2))


# --- persistence -----------------------------------------------------------


def _matrix_to_rows(M: np.ndarray) -> list[list[str]]:
    return [[format(float(v), ".17g") for v in row] for row in np.asarray(M)]


def _rows_to_matrix(rows, shape, name) -> np.ndarray:
    try:
        M = np.array([[float(v) for v in row] for row in rows], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{name}: {exc}") from exc
    if M.shape != tuple(shape) and not (0 in shape and M.size == 0):
        raise ParseError(f"{name}: expected shape {tuple(shape)}, found {M.shape}")
    return M.reshape(shape)


def to_dict(data: DataMatrices, system: SystemModel | None = None) -> dict:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "n": data.n,
        "m": data.m,
        "T": data.T,
        "seed": data.seed,
        "sigma_min_D": data.sigma_min_D,
        "U_minus": _matrix_to_rows(data.U_minus),
        "X_minus": _matrix_to_rows(data.X_minus),
        "X_plus": _matrix_to_rows(data.X_plus),
    }
    if system is not None:
        doc["system"] = {k: _matrix_to_rows(getattr(system, k)) for k in ("A", "B", "Q", "R")}
    return doc


def from_dict(doc: dict) -> tuple[DataMatrices, SystemModel | None]:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ParseError("not a data-batch document")
    try:
        n, m, T = int(doc["n"]), int(doc["m"]), int(doc["T"])
        U = _rows_to_matrix(doc["U_minus"], (m, T), "U_minus")
        X = _rows_to_matrix(doc["X_minus"], (n, T), "X_minus")
        Xp = _rows_to_matrix(doc["X_plus"], (n, T), "X_plus")
        seed = doc.get("seed")
        sysdoc = doc.get("system")
    except KeyError as exc:
        raise ParseError(f"missing field {exc}") from exc
    system = None
    if sysdoc is not None:
        try:
            system = SystemModel(
                _rows_to_matrix(sysdoc["A"], (n, n), "A"),
                _rows_to_matrix(sysdoc["B"], (n, m), "B"),
                _rows_to_matrix(sysdoc["Q"], (n, n), "Q"),
                _rows_to_matrix(sysdoc["R"], (m, m), "R"),
            )
        except KeyError as exc:
            raise ParseError(f"system block missing {exc}") from exc
    return DataMatrices(U, X, Xp, seed=None if seed is None else int(seed)), system


def save(data: DataMatrices, path, system: SystemModel | None = None) -> None:
    """Write the batch as JSON; numbers carry 17 significant digits so the
    round trip is exact. ``system`` (optional) is stored for oracle use only."""
    with open(path, "w") as fh:
        json.dump(to_dict(data, system), fh, indent=1)
        fh.write("\n")


def load_with_system(path) -> tuple[DataMatrices, SystemModel | None]:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return from_dict(doc)


def load(path) -> DataMatrices:
    """Read a batch written by ``save``; the rank certificate is re-run."""
    return load_with_system(path)[0]
