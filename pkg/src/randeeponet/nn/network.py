"""Layer sequences, flat parameter storage and reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import NonFiniteError, ShapeError


class ParamStore:
    """Named parameter blocks backed by a single flat float64 vector.

    Blocks are reshaped views into ``flat``; writing to a block writes to
    ``flat`` and vice versa. ``layout`` is an ordered sequence of
    ``(name, shape)`` pairs.
    """

    def __init__(self, layout: Iterable[tuple[str, Sequence[int]]], flat: np.ndarray | None = None):
        self.layout = tuple((str(name), tuple(int(d) for d in shape)) for name, shape in layout)
        self._slices = {}
        offset = 0
        for name, shape in self.layout:
            if name in self._slices:
                raise ValueError(f"duplicate parameter block {name!r}")
            size = int(np.prod(shape, dtype=np.int64))
            self._slices[name] = (offset, offset + size, shape)
            offset += size
        self.size = offset
        if flat is None:
            self.flat = np.zeros(offset)
        else:
            flat = np.asarray(flat, dtype=np.float64)
            if flat.shape != (offset,):
                raise ShapeError(f"flat vector has shape {flat.shape}, layout needs ({offset},)")
            self.flat = flat

    def __len__(self) -> int:
        return self.size

    def __contains__(self, name: str) -> bool:
        return name in self._slices

    def __getitem__(self, name: str) -> np.ndarray:
        lo, hi, shape = self._slices[name]
        return self.flat[lo:hi].reshape(shape)

    def __setitem__(self, name: str, value) -> None:
        self[name][...] = value

    def names(self) -> list[str]:
        return [name for name, _ in self.layout]

    def blocks(self) -> dict[str, np.ndarray]:
        return {name: self[name] for name in self.names()}

    @classmethod
    def from_blocks(cls, layout, blocks: dict[str, np.ndarray]) -> "ParamStore":
        store = cls(layout)
        for name, _ in store.layout:
            store[name] = blocks[name]
        return store

    def copy(self) -> "ParamStore":
        return ParamStore(self.layout, self.flat.copy())

    def zeros_like(self) -> "ParamStore":
        return ParamStore(self.layout)

    def section(self, prefix: str) -> "ParamStore":
        """View of the blocks named ``prefix*`` with the prefix stripped.

        The blocks must be contiguous in ``flat``; the result shares memory.
        """
        picked = [(n, s) for n, s in self.layout if n.startswith(prefix)]
        if not picked:
            return ParamStore([])
        lo = self._slices[picked[0][0]][0]
        hi = self._slices[picked[-1][0]][1]
        if hi - lo != sum(int(np.prod(s, dtype=np.int64)) for _, s in picked):
            raise ValueError(f"blocks with prefix {prefix!r} are not contiguous")
        return ParamStore([(n[len(prefix):], s) for n, s in picked], self.flat[lo:hi])

    def layer(self, index: int) -> dict[str, np.ndarray]:
        head = f"{index}."
        return {n[len(head):]: self[n] for n in self.names() if n.startswith(head)}


@dataclass(frozen=True)
class NetworkSpec:
    """A feed-forward stack of layers acting on inputs of ``input_shape``."""

    input_shape: tuple[int, ...]
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        self.shapes()  # validate composability up front

    def shapes(self) -> list[tuple[int, ...]]:
        """Per-sample shapes entering each layer, plus the final output shape."""
        shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            try:
                shapes.append(tuple(layer.out_shape(shapes[-1])))
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
        return shapes

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes()[-1]

    def layout(self, prefix: str = "") -> list[tuple[str, tuple[int, ...]]]:
        out = []
        for i, (layer, shape) in enumerate(zip(self.layers, self.shapes())):
            for name, pshape in layer.param_shapes(shape).items():
                out.append((f"{prefix}{i}.{name}", tuple(pshape)))
        return out

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.layout())


def init_params(spec: NetworkSpec, rng: np.random.Generator | int) -> ParamStore:
    """Glorot-uniform weights and zero biases, drawn layer by layer from ``rng``."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    params = ParamStore(spec.layout())
    for i, (layer, shape) in enumerate(zip(spec.layers, spec.shapes())):
        for name, value in layer.init(rng, shape).items():
            params[f"{i}.{name}"] = value
    return params


def _check_input(spec: NetworkSpec, params: ParamStore, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 1 or x.shape[1:] != spec.input_shape:
        raise ShapeError(
            f"layer 0 ({spec.layers[0].kind if spec.layers else 'input'}): "
            f"expected batch x {spec.input_shape}, got {x.shape}"
        )
    if params.layout != tuple(spec.layout()):
        raise ShapeError("parameter layout does not match network spec")
    return x


def forward(spec: NetworkSpec, params: ParamStore, x: np.ndarray, *, keep_tape: bool = False):
    """Run the network on a batch. With ``keep_tape`` also return the cache list
    needed by :func:`backward`."""
    x = _check_input(spec, params, x)
    tape = []
    h = x
    for i, layer in enumerate(spec.layers):
        h, cache = layer.forward(params.layer(i), h)
        tape.append(cache)
    if keep_tape:
        return h, tape
    return h


def backward(spec: NetworkSpec, params: ParamStore, x: np.ndarray, upstream: np.ndarray, tape=None):
    """Gradients of ``sum(upstream * forward(x))``.

    Returns ``(grads, dx)`` where ``grads`` is a ParamStore congruent with
    ``params``. Pass the tape from ``forward(..., keep_tape=True)`` to skip the
    recomputation of the forward pass.
    """
    x = _check_input(spec, params, x)
    if tape is None:
        out, tape = forward(spec, params, x, keep_tape=True)
        out_shape = out.shape
    else:
        out_shape = (x.shape[0],) + spec.output_shape
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != out_shape:
        raise ShapeError(f"upstream has shape {upstream.shape}, forward output is {out_shape}")
    if not np.all(np.isfinite(upstream)):
        raise NonFiniteError("upstream gradient contains non-finite values")
    grads = params.zeros_like()
    d = upstream
    for i in reversed(range(len(spec.layers))):
        g, d = spec.layers[i].backward(params.layer(i), tape[i], d)
        for name, value in g.items():
            grads[f"{i}.{name}"] = value
    return grads, d


def central_difference_check(f: Callable[[np.ndarray], float], theta: np.ndarray,
                             analytic: np.ndarray, h: float = 1e-5) -> float:
    """Max relative error between ``analytic`` and central differences of ``f``.

    ``f`` is evaluated on a perturbed copy of ``theta``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    theta = np.array(theta, dtype=np.float64)
    worst = 0.0
    for k in range(theta.size):
        orig = theta[k]
        theta[k] = orig + h
        fp = f(theta)
        theta[k] = orig - h
        fm = f(theta)
        theta[k] = orig
        cd = (fp - fm) / (2 * h)
        a = analytic[k]
        err = abs(a - cd) / max(abs(a), abs(cd), 1e-8)
        worst = max(worst, err)
    return worst


def grad_check(spec: NetworkSpec, params: ParamStore, x: np.ndarray,
               loss: Callable[[np.ndarray], tuple[float, np.ndarray]], h: float = 1e-5) -> float:
    """Compare backprop against central differences for a scalar loss of the output.

    ``loss(out)`` returns ``(value, d value / d out)``.
    """
    out = forward(spec, params, x)
    _, dout = loss(out)
    grads, _ = backward(spec, params, x, dout)

    def f(theta):
        return loss(forward(spec, ParamStore(params.layout, theta), x))[0]

    return central_difference_check(f, params.flat, grads.flat, h)


def relu_margin(spec: NetworkSpec, params: ParamStore, x: np.ndarray) -> float:
    """Smallest ``|pre-activation|`` entering any ReLU for this input.

    Central differences with step ``h`` are only a valid oracle when the
    perturbation cannot push a pre-activation across the kink, roughly
    ``relu_margin > h``.
    """
    h = _check_input(spec, params, x)
    margin = np.inf
    for i, layer in enumerate(spec.layers):
        p = params.layer(i)
        if layer.kind == "relu" and h.size:
            margin = min(margin, float(np.abs(h).min()))
        elif layer.kind == "resnet-block":
            g = h
            for k in range(layer.depth):
                z = g @ p[f"weight{k}"] + p[f"bias{k}"]
                margin = min(margin, float(np.abs(z).min()))
                g = np.maximum(z, 0.0)
        h, _ = layer.forward(p, h)
    return margin
