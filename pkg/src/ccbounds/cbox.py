"""Finite C-boxes: conditional tables P(s|a,b), input priors and quantum ensembles.

Probability tensors are always indexed ``prob[s, a, b]``: outcome, prepared
state, measurement.  Outcome sequences (one outcome per measurement) are
encoded as integers in base S with digit b equal to s_b, so sequence 0 is
(0, 0, ..., 0) and sequence 1 is (1, 0, ..., 0).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

DEFAULT_TOL = 1e-9
CBOX_FORMAT = "ccbounds.cbox"
ENSEMBLE_FORMAT = "ccbounds.ensemble"


class CBoxError(ValueError):
    """Invalid C-box, prior or ensemble."""


class SchemaError(CBoxError):
    """A file does not follow the documented schema."""

    def __init__(self, path: str, message: str):
        self.field_path = path
        super().__init__(f"{path}: {message}")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CBox:
    prob: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        prob = np.asarray(self.prob, dtype=float)
        if prob.ndim != 3:
            raise CBoxError(f"probability tensor must have rank 3 (s, a, b), got rank {prob.ndim}")
        if min(prob.shape) < 1:
            raise CBoxError(f"empty dimension in shape {prob.shape}")
        object.__setattr__(self, "prob", _frozen(prob))

    @property
    def num_outcomes(self) -> int:
        return self.prob.shape[0]

    @property
    def num_states(self) -> int:
        return self.prob.shape[1]

    @property
    def num_measurements(self) -> int:
        return self.prob.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.prob.shape

    def num_sequences(self) -> int:
        return self.num_outcomes ** self.num_measurements

    def __eq__(self, other):
        if not isinstance(other, CBox):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.prob, other.prob))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class InputPrior:
    rho_a: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho_a, dtype=float)
        if rho.ndim != 1 or rho.size == 0:
            raise CBoxError("prior must be a non-empty vector")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > DEFAULT_TOL:
            raise CBoxError(f"prior must be a probability vector, got sum {rho.sum()!r}")
        object.__setattr__(self, "rho_a", _frozen(rho))

    @classmethod
    def uniform(cls, num_states: int) -> "InputPrior":
        return cls(np.full(num_states, 1.0 / num_states))

    def __len__(self):
        return self.rho_a.size


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    reason: str = ""
    index: tuple[int, ...] | None = None
    worst: float = 0.0

    def __bool__(self):
        return self.valid


def validate_cbox(box: CBox, tol: float = DEFAULT_TOL, *, shape=None) -> ValidationResult:
    """Check nonnegativity and per-(a, b) normalization of ``box``.

    ``shape``, when given, is the declared (S, A, M) the tensor must match.
    Reports the worst-violating index on failure.
    """
    prob = box.prob
    if shape is not None and tuple(shape) != prob.shape:
        return ValidationResult(False, f"dimension mismatch: declared {tuple(shape)}, tensor {prob.shape}")
    if not np.all(np.isfinite(prob)):
        idx = tuple(int(i) for i in np.argwhere(~np.isfinite(prob))[0])
        return ValidationResult(False, "non-finite entry", idx, float("nan"))
    if prob.min() < 0:
        idx = tuple(int(i) for i in np.unravel_index(np.argmin(prob), prob.shape))
        return ValidationResult(False, "negative entry", idx, float(prob.min()))
    dev = np.abs(prob.sum(axis=0) - 1.0)
    if dev.max() > tol:
        a, b = np.unravel_index(np.argmax(dev), dev.shape)
        return ValidationResult(False, "column sum differs from 1", (int(a), int(b)), float(dev.max()))
    return ValidationResult(True, worst=float(dev.max()))


def require_valid(box: CBox, tol: float = DEFAULT_TOL) -> None:
    res = validate_cbox(box, tol)
    if not res:
        raise CBoxError(f"invalid C-box: {res.reason} at {res.index} ({res.worst!r})")


def check_prior(box: CBox, prior: InputPrior) -> None:
    if len(prior) != box.num_states:
        raise CBoxError(f"prior has {len(prior)} entries, box has {box.num_states} states")


# -- outcome sequences -------------------------------------------------------

def sequence_digits(num_outcomes: int, num_measurements: int) -> np.ndarray:
    """Integer array of shape (S**M, M); row k holds the outcomes of sequence k."""
    idx = np.arange(num_outcomes**num_measurements)
    powers = num_outcomes ** np.arange(num_measurements)
    return (idx[:, None] // powers[None, :]) % num_outcomes


def sequence_index(digits, num_outcomes: int) -> int:
    return int(sum(int(s) * num_outcomes**b for b, s in enumerate(digits)))


# -- quantum ensembles -------------------------------------------------------

@dataclass(frozen=True)
class Measurement:
    """Either a full orthonormal basis (rows of ``vectors``) or a rank-1 test vector."""

    kind: str
    vectors: np.ndarray

    def __post_init__(self):
        if self.kind not in ("basis", "two_outcome_vector"):
            raise CBoxError(f"unknown measurement kind {self.kind!r}")
        vec = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
        object.__setattr__(self, "vectors", _frozen(vec))

    @classmethod
    def basis(cls, vectors) -> "Measurement":
        return cls("basis", vectors)

    @classmethod
    def two_outcome(cls, vector) -> "Measurement":
        return cls("two_outcome_vector", np.asarray(vector, dtype=complex)[None, :])

    @property
    def num_outcomes(self) -> int:
        return 2 if self.kind == "two_outcome_vector" else self.vectors.shape[0]


@dataclass(frozen=True)
class QuantumEnsemble:
    dimension: int
    states: tuple
    measurements: tuple

    def __post_init__(self):
        states = tuple(_frozen(np.asarray(s, dtype=complex).ravel()) for s in self.states)
        meas = tuple(m if isinstance(m, Measurement) else Measurement(*m) for m in self.measurements)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "measurements", meas)
        validate_ensemble(self)


def validate_ensemble(ens: QuantumEnsemble) -> None:
    n = ens.dimension
    if n < 1:
        raise CBoxError("dimension must be positive")
    if not ens.states or not ens.measurements:
        raise CBoxError("ensemble needs at least one state and one measurement")
    for a, psi in enumerate(ens.states):
        if psi.shape != (n,):
            raise CBoxError(f"state {a} has length {psi.size}, expected {n}")
        if abs(np.vdot(psi, psi).real - 1.0) > 1e-12:
            raise CBoxError(f"state {a} is not normalized (norm^2 = {np.vdot(psi, psi).real!r})")
    for b, m in enumerate(ens.measurements):
        vec = m.vectors
        if vec.shape[1] != n:
            raise CBoxError(f"measurement {b} vectors have length {vec.shape[1]}, expected {n}")
        if m.kind == "basis":
            if vec.shape[0] != n:
                raise CBoxError(f"measurement {b} basis has {vec.shape[0]} vectors, expected {n}")
            gram = vec.conj() @ vec.T
            if np.abs(gram - np.eye(n)).max() > 1e-10:
                raise CBoxError(f"measurement {b} basis is not orthonormal")
        else:
            if vec.shape[0] != 1 or abs(np.vdot(vec[0], vec[0]).real - 1.0) > 1e-10:
                raise CBoxError(f"measurement {b} two-outcome vector is not normalized")
    outcome_counts = {m.num_outcomes for m in ens.measurements}
    if len(outcome_counts) != 1:
        raise CBoxError(f"measurements disagree on the number of outcomes: {sorted(outcome_counts)}")


def born_cbox(ens: QuantumEnsemble) -> CBox:
    """Noiseless-channel C-box from the Born rule.

    Two-outcome measurements give P(1) = |<psi|phi>|^2 and P(2) = 1 - P(1);
    bases give |<psi_a|phi_{b,s}>|^2.
    """
    S = ens.measurements[0].num_outcomes
    A, M = len(ens.states), len(ens.measurements)
    prob = np.empty((S, A, M))
    for b, m in enumerate(ens.measurements):
        for a, psi in enumerate(ens.states):
            amps = np.abs(m.vectors.conj() @ psi) ** 2
            if m.kind == "two_outcome_vector":
                p1 = min(float(amps[0]), 1.0)
                prob[:, a, b] = (p1, 1.0 - p1)
            else:
                prob[:, a, b] = amps / amps.sum()
    return CBox(prob)


def bloch_qubit(theta: float, phi: float = 0.0) -> np.ndarray:
    return np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])


# -- constructors ------------------------------------------------------------

def identity_box(num_states: int = 2, num_measurements: int = 1) -> CBox:
    """P(s|a,b) = delta_{s,a}: the receiver learns a perfectly."""
    prob = np.zeros((num_states, num_states, num_measurements))
    for a in range(num_states):
        prob[a, a, :] = 1.0
    return CBox(prob)


def constant_box(q, num_states: int) -> CBox:
    """P(s|a,b) = q(s|b) regardless of a.  ``q`` has shape (S,) or (S, M)."""
    q = np.asarray(q, dtype=float)
    if q.ndim == 1:
        q = q[:, None]
    return CBox(np.repeat(q[:, None, :], num_states, axis=1))


def random_box(rng: np.random.Generator, num_outcomes: int, num_states: int,
               num_measurements: int, concentration: float = 1.0) -> CBox:
    alpha = np.full(num_outcomes, concentration)
    draws = rng.dirichlet(alpha, size=(num_states, num_measurements))
    return CBox(np.moveaxis(draws, -1, 0))


# -- serialization -----------------------------------------------------------

def _require(doc: dict, key: str, path: str = "") -> Any:
    if not isinstance(doc, dict):
        raise SchemaError(path or "$", "expected an object")
    if key not in doc:
        raise SchemaError(f"{path}{key}" if path else key, "missing required field")
    return doc[key]


def _positive_int(value, path):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise SchemaError(path, f"expected a positive integer, got {value!r}")
    return value


def _tensor(value, path, rank):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(path, f"not a rectangular numeric array ({exc})") from None
    if arr.ndim != rank:
        raise SchemaError(path, f"dimension error: expected rank {rank}, got rank {arr.ndim}")
    return arr


def cbox_to_dict(box: CBox) -> dict:
    S, A, M = box.shape
    return {
        "format": CBOX_FORMAT,
        "version": 1,
        "num_outcomes": S,
        "num_states": A,
        "num_measurements": M,
        "probabilities": box.prob.tolist(),
        "metadata": dict(box.metadata),
    }


def cbox_from_dict(doc: dict, tol: float = DEFAULT_TOL) -> CBox:
    S = _positive_int(_require(doc, "num_outcomes"), "num_outcomes")
    A = _positive_int(_require(doc, "num_states"), "num_states")
    M = _positive_int(_require(doc, "num_measurements"), "num_measurements")
    prob = _tensor(_require(doc, "probabilities"), "probabilities", 3)
    if prob.shape != (S, A, M):
        raise SchemaError("probabilities", f"dimension error: shape {prob.shape} does not match "
                                           f"declared (num_outcomes, num_states, num_measurements) = {(S, A, M)}")
    meta = doc.get("metadata", {})
    if not isinstance(meta, dict):
        raise SchemaError("metadata", "expected an object")
    box = CBox(prob, metadata=meta)
    res = validate_cbox(box, tol)
    if not res:
        raise SchemaError(f"probabilities{list(res.index or ())}", f"{res.reason} ({res.worst!r})")
    return box


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"malformed JSON: {exc}") from None


def save_cbox(box: CBox, path) -> None:
    Path(path).write_text(json.dumps(cbox_to_dict(box), indent=1) + "\n")


def load_cbox(path, tol: float = DEFAULT_TOL) -> CBox:
    return cbox_from_dict(_read_json(path), tol)


def _complex_vector(value, path) -> np.ndarray:
    arr = _tensor(value, path, 2)
    if arr.shape[1] != 2:
        raise SchemaError(path, "complex entries must be [re, im] pairs")
    return arr[:, 0] + 1j * arr[:, 1]


def _pairs(vec) -> list:
    vec = np.asarray(vec, dtype=complex)
    return [[float(z.real), float(z.imag)] for z in vec]


def ensemble_to_dict(ens: QuantumEnsemble) -> dict:
    meas = []
    for m in ens.measurements:
        if m.kind == "basis":
            meas.append({"type": "basis", "vectors": [_pairs(v) for v in m.vectors]})
        else:
            meas.append({"type": "two_outcome_vector", "vector": _pairs(m.vectors[0])})
    return {
        "format": ENSEMBLE_FORMAT,
        "version": 1,
        "dimension": ens.dimension,
        "states": [_pairs(s) for s in ens.states],
        "measurements": meas,
    }


def ensemble_from_dict(doc: dict) -> QuantumEnsemble:
    n = _positive_int(_require(doc, "dimension"), "dimension")
    raw_states = _require(doc, "states")
    if not isinstance(raw_states, list):
        raise SchemaError("states", "expected a list")
    states = [_complex_vector(s, f"states[{i}]") for i, s in enumerate(raw_states)]
    raw_meas = _require(doc, "measurements")
    if not isinstance(raw_meas, list):
        raise SchemaError("measurements", "expected a list")
    meas = []
    for i, m in enumerate(raw_meas):
        kind = _require(m, "type", f"measurements[{i}].")
        if kind == "basis":
            vecs = _require(m, "vectors", f"measurements[{i}].")
            meas.append(Measurement.basis([_complex_vector(v, f"measurements[{i}].vectors[{j}]")
                                           for j, v in enumerate(vecs)]))
        elif kind == "two_outcome_vector":
            vec = _require(m, "vector", f"measurements[{i}].")
            meas.append(Measurement.two_outcome(_complex_vector(vec, f"measurements[{i}].vector")))
        else:
            raise SchemaError(f"measurements[{i}].type", f"unknown measurement type {kind!r}")
    return QuantumEnsemble(n, tuple(states), tuple(meas))


def save_ensemble(ens: QuantumEnsemble, path) -> None:
    Path(path).write_text(json.dumps(ensemble_to_dict(ens), indent=1) + "\n")


def load_ensemble(path) -> QuantumEnsemble:
    return ensemble_from_dict(_read_json(path))


def load_any_box(path, tol: float = DEFAULT_TOL) -> CBox:
    """Load a C-box file, or an ensemble file converted through the Born rule."""
    doc = _read_json(path)
    if isinstance(doc, dict) and (doc.get("format") == ENSEMBLE_FORMAT or "states" in doc):
        return born_cbox(ensemble_from_dict(doc))
    return cbox_from_dict(doc, tol)
