"""Dense tanh network N(x, w; t) and the boundary-condition ansatz wrappers."""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from cpinn import autodiff as ad

if TYPE_CHECKING:
    from cpinn.problems import ProblemDefinition

__all__ = [
    "CheckpointError",
    "NetworkLayout",
    "NetworkParams",
    "Ansatz",
    "init_params",
    "mlp_forward",
    "ansatz_eval",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

Array = NDArray[np.float64]
CHECKPOINT_VERSION = 1
ANSATZ_KINDS = ("windowed_dirichlet", "natural")


class CheckpointError(ValueError):
    """Checkpoint file is unreadable, corrupt, or does not match the expected layout."""


@dataclass(frozen=True)
class NetworkLayout:
    """Scalar-output MLP with tanh hidden layers and a linear output.

    An empty ``hidden`` gives a purely affine map; only test harnesses use it.
    """

    spatial_dim: int
    tag_dim: int = 0
    hidden: tuple[int, ...] = (4, 4)

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.spatial_dim < 1 or self.tag_dim < 0 or any(h < 1 for h in self.hidden):
            raise ValueError(f"invalid layout {self}")

    @property
    def input_width(self) -> int:
        return self.spatial_dim + self.tag_dim

    @property
    def shapes(self) -> list[tuple[int, int]]:
        widths = [self.input_width, *self.hidden, 1]
        return list(zip(widths[:-1], widths[1:]))

    @property
    def n_params(self) -> int:
        return sum((n_in + 1) * n_out for n_in, n_out in self.shapes)

    def describe(self) -> str:
        """Compact name such as ``3x[8]``."""
        if len(set(self.hidden)) == 1:
            return f"{len(self.hidden)}x[{self.hidden[0]}]"
        return "[" + ",".join(map(str, self.hidden)) + "]"

    def to_dict(self) -> dict[str, Any]:
        return {"spatial_dim": self.spatial_dim, "tag_dim": self.tag_dim, "hidden": list(self.hidden)}


def unflatten(layout: NetworkLayout, flat):
    """Split a flat parameter vector (array or tape variable) into ``(W, b)`` per layer.

    Layer order, each ``W`` row-major ``(n_in, n_out)`` followed by ``b``.
    """
    layers = []
    offset = 0
    for n_in, n_out in layout.shapes:
        w = flat[offset : offset + n_in * n_out].reshape(n_in, n_out)
        offset += n_in * n_out
        b = flat[offset : offset + n_out]
        offset += n_out
        layers.append((w, b))
    return layers


@dataclass
class NetworkParams:
    layout: NetworkLayout
    flat: Array

    def __post_init__(self) -> None:
        self.flat = np.asarray(self.flat, dtype=np.float64)
        if self.flat.shape != (self.layout.n_params,):
            raise ValueError(
                f"layout {self.layout.describe()} needs {self.layout.n_params} parameters, got {self.flat.shape}"
            )

    def layers(self) -> list[tuple[Array, Array]]:
        return unflatten(self.layout, self.flat)

    def copy(self) -> NetworkParams:
        return NetworkParams(self.layout, self.flat.copy())


def init_params(layout: NetworkLayout, seed: int) -> NetworkParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    parts = []
    for n_in, n_out in layout.shapes:
        bound = np.sqrt(6.0 / (n_in + n_out))
        parts.append(rng.uniform(-bound, bound, size=n_in * n_out))
        parts.append(np.zeros(n_out))
    return NetworkParams(layout, np.concatenate(parts))


def mlp_forward(layers: Sequence, inputs: Array, seed: Array):
    """Run the MLP on ``inputs`` ``(n, width)`` carrying input tangents ``seed``.

    ``seed`` has shape ``(d, 1, width)``: row ``k`` is d(input)/d(x_k).  Returns
    the output values ``(n,)`` and their spatial derivatives ``(d, n)``; both are
    tape variables when the layers are.
    """
    h = ad.DualVector(inputs, seed)
    for w, b in layers[:-1]:
        h = ad.tanh(h @ w + b)
    w, b = layers[-1]
    out = h @ w + b
    tangents = out.tangents
    if np.shape(tangents)[1] != np.shape(out.value)[0]:
        tangents = tangents + np.zeros((1, np.shape(out.value)[0], 1))
    return out.value[:, 0], tangents[:, :, 0]


def _quartic_window(u: Array) -> tuple[Array, Array]:
    s = 2.0 * u - 1.0
    return 1.0 - s**4, -8.0 * s**3


WINDOWS = {"quartic": _quartic_window}


@dataclass(frozen=True)
class Ansatz:
    """How network output becomes the trial function, plus input scaling.

    Spatial coordinates are mapped affinely from the domain box to [-1, 1];
    tags from their sampling box to [0, 1].  ``windowed_dirichlet`` multiplies
    the network by a window vanishing on the box faces; ``natural`` uses the
    network output directly.
    """

    kind: str
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    tag_lower: tuple[float, ...] = ()
    tag_upper: tuple[float, ...] = ()
    window: str | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in ANSATZ_KINDS:
            raise ValueError(f"unknown ansatz kind {self.kind!r}")
        if self.kind == "windowed_dirichlet" and self.window not in WINDOWS:
            raise ValueError(f"windowed ansatz needs a window from {sorted(WINDOWS)}")
        for name in ("lower", "upper", "tag_lower", "tag_upper"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    @classmethod
    def for_problem(cls, problem: ProblemDefinition) -> Ansatz:
        return cls(
            kind=problem.ansatz_kind,
            lower=problem.lower,
            upper=problem.upper,
            tag_lower=problem.tag_lower,
            tag_upper=problem.tag_upper,
            window=problem.window,
        )

    @property
    def spatial_dim(self) -> int:
        return len(self.lower)

    @property
    def tag_dim(self) -> int:
        return len(self.tag_lower)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "window": self.window,
            "lower": list(self.lower),
            "upper": list(self.upper),
            "tag_lower": list(self.tag_lower),
            "tag_upper": list(self.tag_upper),
        }

    def network_inputs(self, points: Array, tags: Array) -> tuple[Array, Array]:
        """Scaled network input rows and the constant input-tangent seed."""
        lo = np.asarray(self.lower)
        span = np.asarray(self.upper) - lo
        n = points.shape[0]
        x = 2.0 * (points - lo) / span - 1.0
        if self.tag_dim:
            t = (np.asarray(tags, dtype=np.float64) - self.tag_lower) / np.subtract(self.tag_upper, self.tag_lower)
            x = np.concatenate([x, np.broadcast_to(t, (n, self.tag_dim))], axis=1)
        key = "seed"
        if key not in self._cache:
            d = self.spatial_dim
            seed = np.zeros((d, 1, d + self.tag_dim))
            seed[np.arange(d), 0, np.arange(d)] = 2.0 / span
            self._cache[key] = seed
        return x, self._cache[key]

    def evaluate(self, layers: Sequence, points: Array, tags: Array = ()):
        """Trial function and its spatial gradient, ``(n,)`` and ``(d, n)``."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, self.spatial_dim)
        x, seed = self.network_inputs(points, tags)
        y, gy = mlp_forward(layers, x, seed)
        if self.kind == "natural":
            return y, gy
        lo = np.asarray(self.lower)
        span = np.asarray(self.upper) - lo
        w, dw = WINDOWS[self.window]((points - lo) / span)
        dw = dw / span
        # product window over coordinates and its gradient
        total = np.prod(w, axis=1)
        grad_w = np.empty((self.spatial_dim, len(points)))
        for k in range(self.spatial_dim):
            others = np.prod(np.delete(w, k, axis=1), axis=1)
            grad_w[k] = dw[:, k] * others
        return y * total, gy * total + grad_w * y


def ansatz_eval(ansatz: Ansatz, params: NetworkParams, x: ArrayLike, t: ArrayLike = ()) -> tuple[Array, Array]:
    """Trial function value and spatial gradient at raw points ``x`` for tags ``t``.

    A single point returns a scalar value and a ``d``-vector gradient.
    """
    if params.layout.spatial_dim != ansatz.spatial_dim or params.layout.tag_dim != ansatz.tag_dim:
        raise ValueError("network layout does not match the ansatz dimensions")
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if t.shape != (ansatz.tag_dim,):
        raise ValueError(f"expected {ansatz.tag_dim} tags, got {t.shape}")
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 0 or (pts.ndim == 1 and ansatz.spatial_dim > 1)
    y, gy = ansatz.evaluate(params.layers(), pts, t)
    if single:
        return float(y[0]), np.asarray(gy)[:, 0].copy()
    return np.asarray(y), np.asarray(gy)


# ----------------------------------------------------------------------------
# checkpoints


def _digest(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def save_checkpoint(
    path: str | Path,
    params: NetworkParams,
    ansatz: Ansatz,
    *,
    seed: int | None = None,
    problem: str | None = None,
    extra: dict[str, Any] | None = None,
) -> Path:
    """Write a JSON checkpoint; parameters are base64 little-endian float64."""
    raw = params.flat.astype("<f8").tobytes()
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "problem": problem,
        "layout": params.layout.to_dict(),
        "ansatz": ansatz.to_dict(),
        "seed": seed,
        "n_params": params.layout.n_params,
        "params_sha256": _digest(raw),
        "params_b64": base64.b64encode(raw).decode("ascii"),
    }
    if extra:
        doc["extra"] = extra
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


@dataclass
class Checkpoint:
    params: NetworkParams
    ansatz: Ansatz
    seed: int | None
    problem: str | None
    extra: dict[str, Any]


def load_checkpoint(path: str | Path, layout: NetworkLayout | None = None) -> Checkpoint:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        CheckpointError: unreadable or corrupt file, or ``layout`` given and different.
    """
    try:
        doc = json.loads(Path(path).read_text())
        if doc.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {doc.get('format_version')!r}")
        stored = NetworkLayout(
            spatial_dim=doc["layout"]["spatial_dim"],
            tag_dim=doc["layout"]["tag_dim"],
            hidden=tuple(doc["layout"]["hidden"]),
        )
        raw = base64.b64decode(doc["params_b64"], validate=True)
        a = doc["ansatz"]
        ansatz = Ansatz(
            kind=a["kind"],
            lower=a["lower"],
            upper=a["upper"],
            tag_lower=a["tag_lower"],
            tag_upper=a["tag_upper"],
            window=a["window"],
        )
    except CheckpointError:
        raise
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if _digest(raw) != doc.get("params_sha256"):
        raise CheckpointError("parameter checksum mismatch")
    flat = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if flat.size != stored.n_params or doc.get("n_params") != stored.n_params:
        raise CheckpointError("parameter count does not match stored layout")
    if layout is not None and layout != stored:
        raise CheckpointError(f"checkpoint layout {stored} differs from expected {layout}")
    return Checkpoint(
        params=NetworkParams(stored, flat),
        ansatz=ansatz,
        seed=doc.get("seed"),
        problem=doc.get("problem"),
        extra=doc.get("extra", {}),
    )
