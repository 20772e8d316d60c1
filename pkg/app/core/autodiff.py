"""
Reverse-mode differentiation over dense float64 matrices.

Every primitive records a Node on the active Tape. Vector-Jacobian products
are written with the same primitives, so a gradient computed with
``create_graph=True`` is itself a recorded computation and can be
differentiated again (needed for the gradient penalty).
"""
import hashlib
import itertools
import math
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from app.errors import ContractError, ShapeError, TrainingDivergenceError
from app.schemas import AdamHyper, MlpSpec

# A Tensor2 is a 2-D float64 array; vectors are 1 x n rows.
Tensor2 = np.ndarray
ArrayLike = Union[float, int, np.ndarray]

_ids = itertools.count()
_local = threading.local()


def as_tensor2(value: ArrayLike) -> Tensor2:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got {arr.ndim}")
    return arr


class Node:
    __slots__ = ("id", "tape", "value", "op", "parents", "vjp", "fn", "requires_grad", "name")

    def __init__(self, tape, value, op, parents=(), vjp=None, fn=None, requires_grad=False, name=None):
        self.id = next(_ids)
        self.tape = tape
        self.value = value
        self.op = op
        self.parents = tuple(parents)
        self.vjp = vjp
        self.fn = fn
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        label = self.name or self.op
        return f"Node({label}, shape={self.shape})"

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)


class Tape:
    """Ordered record of primitive operations; parents always precede children"""

    def __init__(self):
        self.nodes: list[Node] = []
        self.parameters: dict[str, Node] = {}

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def output(self) -> Node:
        if not self.nodes:
            raise ContractError("tape is empty")
        return self.nodes[-1]

    def _append(self, node: Node) -> Node:
        self.nodes.append(node)
        return node

    def constant(self, value: ArrayLike, name: Optional[str] = None) -> Node:
        return self._append(Node(self, as_tensor2(value), "const", name=name))

    def variable(self, value: ArrayLike, name: Optional[str] = None) -> Node:
        arr = as_tensor2(value).copy()
        return self._append(Node(self, arr, "leaf", requires_grad=True, name=name))

    def watch(self, params: "ParameterSet") -> dict[str, Node]:
        """Register parameter blocks as leaves (idempotent per name)"""
        nodes = {}
        for name, block in params.items():
            node = self.parameters.get(name)
            if node is None or node.value is not block:
                node = self._append(Node(self, block, "param", requires_grad=True, name=name))
                self.parameters[name] = node
            nodes[name] = node
        return nodes

    def replay(self, feeds: Optional[dict[int, np.ndarray]] = None) -> dict[int, np.ndarray]:
        """Re-execute every recorded primitive; leaves take values from feeds when given"""
        feeds = feeds or {}
        values: dict[int, np.ndarray] = {}
        for node in self.nodes:
            if node.fn is None:
                values[node.id] = feeds.get(node.id, node.value)
            else:
                args = [values.get(p.id, p.value) for p in node.parents]
                values[node.id] = node.fn(*args)
        return values


def _stack() -> list:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> Tape:
    stack = _stack()
    if not stack:
        raise ContractError("no active tape; record inside `with tape:`")
    return stack[-1]


def _lift(x) -> Node:
    if isinstance(x, Node):
        return x
    return active_tape().constant(x)


def _record(op: str, fn: Callable, parents: Sequence[Node], vjp: Callable) -> Node:
    tape = active_tape()
    value = fn(*[p.value for p in parents])
    requires_grad = any(p.requires_grad for p in parents)
    return tape._append(Node(tape, value, op, parents, vjp, fn, requires_grad))


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def _sum_to_shape(value: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if shape[0] == 1 and value.shape[0] != 1:
        value = value.sum(axis=0, keepdims=True)
    if shape[1] == 1 and value.shape[1] != 1:
        value = value.sum(axis=1, keepdims=True)
    return value


def sum_to(x: Node, shape: tuple[int, int]) -> Node:
    if x.shape == tuple(shape):
        return x
    return _record("sum_to", lambda a: _sum_to_shape(a, shape), (x,),
                   lambda g, node: (broadcast_to(g, node.parents[0].shape),))


def broadcast_to(x: Node, shape: tuple[int, int]) -> Node:
    if x.shape == tuple(shape):
        return x
    return _record("broadcast_to", lambda a: np.broadcast_to(a, shape).copy(), (x,),
                   lambda g, node: (sum_to(g, node.parents[0].shape),))


def _check_broadcast(a: Node, b: Node, op: str) -> None:
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def add(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "add")

    def vjp(g, node):
        pa, pb = node.parents
        return (sum_to(g, pa.shape) if pa.requires_grad else None,
                sum_to(g, pb.shape) if pb.requires_grad else None)
    return _record("add", np.add, (a, b), vjp)


def sub(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "sub")

    def vjp(g, node):
        pa, pb = node.parents
        return (sum_to(g, pa.shape) if pa.requires_grad else None,
                sum_to(neg(g), pb.shape) if pb.requires_grad else None)
    return _record("sub", np.subtract, (a, b), vjp)


def mul(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "mul")

    def vjp(g, node):
        pa, pb = node.parents
        return (sum_to(mul(g, pb), pa.shape) if pa.requires_grad else None,
                sum_to(mul(g, pa), pb.shape) if pb.requires_grad else None)
    return _record("mul", np.multiply, (a, b), vjp)


def scale(x: Node, c: float) -> Node:
    c = float(c)
    return _record("scale", lambda a: c * a, (x,), lambda g, node: (scale(g, c),))


def neg(x: Node) -> Node:
    return _record("neg", np.negative, (x,), lambda g, node: (neg(g),))


def matmul(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")

    def vjp(g, node):
        pa, pb = node.parents
        return (matmul(g, transpose(pb)) if pa.requires_grad else None,
                matmul(transpose(pa), g) if pb.requires_grad else None)
    return _record("matmul", np.matmul, (a, b), vjp)


def transpose(x: Node) -> Node:
    return _record("transpose", lambda a: np.ascontiguousarray(a.T), (x,),
                   lambda g, node: (transpose(g),))


def sum(x: Node, axis: Optional[int] = None) -> Node:  # noqa: A001 - mirrors numpy
    if axis is None:
        fn = lambda a: np.sum(a).reshape(1, 1)
    else:
        fn = lambda a: np.sum(a, axis=axis, keepdims=True)
    return _record("sum", fn, (x,), lambda g, node: (broadcast_to(g, node.parents[0].shape),))


def mean(x: Node, axis: Optional[int] = None) -> Node:
    count = x.value.size if axis is None else x.shape[axis]
    return scale(sum(x, axis), 1.0 / count)


def square(x: Node) -> Node:
    return mul(x, x)


def reciprocal(x: Node) -> Node:
    """Elementwise 1/x, defined as 0 (with zero derivative) where x == 0"""
    def fn(a):
        out = np.zeros_like(a)
        np.divide(1.0, a, out=out, where=a != 0)
        return out
    return _record("reciprocal", fn, (x,), lambda g, node: (neg(mul(g, square(node))),))


def sqrt(x: Node) -> Node:
    """Elementwise sqrt; the derivative at 0 is taken as 0"""
    return _record("sqrt", np.sqrt, (x,),
                   lambda g, node: (scale(mul(g, reciprocal(node)), 0.5),))


def exp(x: Node) -> Node:
    return _record("exp", np.exp, (x,), lambda g, node: (mul(g, node),))


def log(x: Node) -> Node:
    return _record("log", np.log, (x,), lambda g, node: (mul(g, reciprocal(node.parents[0])),))


def tanh(x: Node) -> Node:
    return _record("tanh", np.tanh, (x,), lambda g, node: (mul(g, sub(1.0, square(node))),))


def sigmoid(x: Node) -> Node:
    fn = lambda a: 0.5 * (np.tanh(0.5 * a) + 1.0)
    return _record("sigmoid", fn, (x,), lambda g, node: (mul(g, mul(node, sub(1.0, node))),))


def softplus(x: Node) -> Node:
    return _record("softplus", lambda a: np.logaddexp(0.0, a), (x,),
                   lambda g, node: (mul(g, sigmoid(node.parents[0])),))


def leaky_relu(x: Node, slope: float = 0.0) -> Node:
    """Piecewise linear; the subgradient at 0 is the negative-side slope"""
    slope = float(slope)

    def vjp(g, node):
        mask = np.where(node.parents[0].value > 0, 1.0, slope)
        return (mul(g, active_tape().constant(mask)),)
    return _record("leaky_relu", lambda a: np.where(a > 0, a, slope * a), (x,), vjp)


def relu(x: Node) -> Node:
    return leaky_relu(x, 0.0)


def stop_gradient(x: Union[ArrayLike, Node]) -> Node:
    """Constant copy of x on the active tape: forward value kept, no gradient flows back"""
    return active_tape().constant(x.value if isinstance(x, Node) else x)


def take_rows(x: Node, rows: np.ndarray) -> Node:
    rows = np.asarray(rows, dtype=np.int64)
    n = x.shape[0]
    return _record("take_rows", lambda a: a[rows], (x,),
                   lambda g, node: (scatter_rows(g, rows, n),))


def scatter_rows(x: Node, rows: np.ndarray, n: int) -> Node:
    rows = np.asarray(rows, dtype=np.int64)

    def fn(a):
        out = np.zeros((n, a.shape[1]))
        np.add.at(out, rows, a)
        return out
    return _record("scatter_rows", fn, (x,), lambda g, node: (take_rows(g, rows),))


def columns(x: Node, start: int, stop: int) -> Node:
    width = x.shape[1]
    return _record("columns", lambda a: a[:, start:stop].copy(), (x,),
                   lambda g, node: (embed_columns(g, start, width),))


def embed_columns(x: Node, start: int, width: int) -> Node:
    stop = start + x.shape[1]

    def fn(a):
        out = np.zeros((a.shape[0], width))
        out[:, start:stop] = a
        return out
    return _record("embed_columns", fn, (x,), lambda g, node: (columns(g, start, stop),))


def bilinear(x: Node, left: np.ndarray, right: np.ndarray) -> Node:
    """Row-wise image map X -> left @ X @ right.T for flattened (n, H*W) images"""
    h, w = left.shape[1], right.shape[1]
    if x.shape[1] != h * w:
        raise ShapeError(f"bilinear: rows of width {x.shape[1]} are not {h}x{w} images")

    def fn(a):
        imgs = a.reshape(a.shape[0], h, w)
        return (left @ imgs @ right.T).reshape(a.shape[0], -1)
    return _record("bilinear", fn, (x,), lambda g, node: (bilinear(g, left.T, right.T),))


def log_softmax(x: Node) -> Node:
    shift = active_tape().constant(np.max(x.value, axis=1, keepdims=True))
    shifted = sub(x, shift)
    return sub(shifted, log(sum(exp(shifted), axis=1)))


def cross_entropy(logits: Node, labels: np.ndarray) -> Node:
    """Mean negative log-likelihood of integer labels under row-wise softmax"""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != logits.shape[0]:
        raise ShapeError(f"cross_entropy: {labels.shape[0]} labels for {logits.shape[0]} rows")
    onehot = np.zeros(logits.shape)
    onehot[np.arange(labels.shape[0]), labels] = 1.0
    picked = sum(mul(log_softmax(logits), active_tape().constant(onehot)), axis=1)
    return neg(mean(picked))


_ACTIVATIONS: dict[str, Callable[..., Node]] = {
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "identity": lambda x: x,
}


def activate(x: Node, kind: str, leaky_slope: float = 0.2) -> Node:
    if kind == "leaky_relu":
        return leaky_relu(x, leaky_slope)
    return _ACTIVATIONS[kind](x)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def _reachable(root: Node) -> list[Node]:
    seen: dict[int, Node] = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if node.id in seen or not node.requires_grad:
            continue
        seen[node.id] = node
        stack.extend(node.parents)
    # ids grow with creation order, so descending id is a reverse topological order
    return sorted(seen.values(), key=lambda n: n.id, reverse=True)


def gradients(root: Node, wrt: Sequence[Node], seed: float = 1.0,
              create_graph: bool = False) -> list[Optional[Node]]:
    """d(root)/d(wrt) for a scalar root; None for inputs root does not depend on.

    With create_graph the gradient nodes are recorded on root's tape and can
    be differentiated again; otherwise they live on a scratch tape.
    """
    if root.value.size != 1:
        raise ContractError(f"gradient root must be scalar, got shape {root.shape}")
    tape = root.tape if create_graph else Tape()
    wanted = {n.id for n in wrt}
    found: dict[int, Node] = {}
    with tape:
        grads: dict[int, Node] = {root.id: tape.constant(np.full(root.shape, float(seed)))}
        for node in _reachable(root):
            g = grads.pop(node.id, None)
            if g is None:
                continue
            if node.id in wanted:
                found[node.id] = g
            if node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g, node)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads.get(parent.id)
                grads[parent.id] = pg if prev is None else add(prev, pg)
    return [found.get(n.id) for n in wrt]


def grad_params(tape: Tape, seed: float = 1.0, root: Optional[Node] = None) -> "ParameterSet":
    """Gradient of the tape's scalar output with respect to every watched parameter"""
    root = root if root is not None else tape.output
    if root.value.size != 1:
        raise ContractError(f"tape must end in a scalar node, got shape {root.shape}")
    names = list(tape.parameters)
    leaves = [tape.parameters[n] for n in names]
    grads = gradients(root, leaves, seed=seed)
    blocks = {}
    for name, leaf, g in zip(names, leaves, grads):
        blocks[name] = np.zeros_like(leaf.value) if g is None else g.value.copy()
    return ParameterSet(blocks)


# ---------------------------------------------------------------------------
# Parameters and MLPs
# ---------------------------------------------------------------------------

class ParameterSet:
    """Ordered named parameter blocks (2-D float64 arrays)"""

    def __init__(self, blocks: dict[str, np.ndarray]):
        self._blocks = {name: as_tensor2(block) for name, block in blocks.items()}

    def __getitem__(self, name: str) -> np.ndarray:
        return self._blocks[name]

    def __contains__(self, name: str) -> bool:
        return name in self._blocks

    def __iter__(self) -> Iterator[str]:
        return iter(self._blocks)

    def __len__(self) -> int:
        return len(self._blocks)

    def items(self) -> Iterable[tuple[str, np.ndarray]]:
        return self._blocks.items()

    def names(self) -> list[str]:
        return list(self._blocks)

    def shapes(self) -> dict[str, tuple[int, int]]:
        return {n: b.shape for n, b in self._blocks.items()}

    @property
    def size(self) -> int:
        return int(np.sum([b.size for b in self._blocks.values()]))

    def flatten(self) -> np.ndarray:
        if not self._blocks:
            return np.zeros(0)
        return np.concatenate([b.ravel() for b in self._blocks.values()])

    def unflatten(self, flat: np.ndarray) -> "ParameterSet":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.size:
            raise ShapeError(f"flat vector has {flat.size} entries, parameters need {self.size}")
        blocks, offset = {}, 0
        for name, block in self._blocks.items():
            blocks[name] = flat[offset:offset + block.size].reshape(block.shape).copy()
            offset += block.size
        return ParameterSet(blocks)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ParameterSet":
        return ParameterSet({n: fn(b) for n, b in self._blocks.items()})

    def zeros_like(self) -> "ParameterSet":
        return self.map(np.zeros_like)

    def copy(self) -> "ParameterSet":
        return self.map(np.copy)

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for name, block in self._blocks.items():
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(block).tobytes())
        return digest.hexdigest()

    def to_dict(self) -> dict[str, list]:
        return {n: b.tolist() for n, b in self._blocks.items()}

    @classmethod
    def from_dict(cls, data: dict[str, list]) -> "ParameterSet":
        return cls({n: np.array(v, dtype=np.float64) for n, v in data.items()})

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParameterSet) or self.names() != other.names():
            return False
        return all(np.array_equal(self[n], other[n]) for n in self.names())


def layer_names(index: int, prefix: str = "layers") -> tuple[str, str]:
    return f"{prefix}.{index}.weight", f"{prefix}.{index}.bias"


def init_mlp(spec: MlpSpec, rng: np.random.Generator, prefix: str = "layers") -> ParameterSet:
    """Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases"""
    blocks = {}
    for i, (fan_in, fan_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        w_name, b_name = layer_names(i, prefix)
        blocks[w_name] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        blocks[b_name] = np.zeros((1, fan_out))
    return ParameterSet(blocks)


def mlp_forward(spec: MlpSpec, params: ParameterSet, x: Union[ArrayLike, Node],
                tape: Optional[Tape] = None, depth: Optional[int] = None,
                prefix: str = "layers", trainable: bool = True) -> tuple[Node, Tape]:
    """Forward pass recorded on a tape.

    ``x`` is a vector or a batch of row vectors. ``depth`` truncates the
    network after that many layers (hidden activation applied), which is how
    penultimate-layer features are read. With ``trainable=False`` the blocks
    enter the tape as constants and receive no gradient.
    """
    tape = tape if tape is not None else Tape()
    depth = spec.num_layers if depth is None else depth
    if not 1 <= depth <= spec.num_layers:
        raise ContractError(f"depth must be in [1, {spec.num_layers}], got {depth}")
    with tape:
        if trainable:
            nodes = tape.watch(params)
        else:
            nodes = {name: tape.constant(block, name=name) for name, block in params.items()}
        h = x if isinstance(x, Node) else tape.constant(x)
        if h.shape[1] != spec.widths[0]:
            raise ShapeError(f"input width {h.shape[1]} != {spec.widths[0]}", layer=0)
        for i in range(depth):
            w_name, b_name = layer_names(i, prefix)
            if w_name not in nodes or b_name not in nodes:
                raise ShapeError(f"missing parameters {w_name}/{b_name}", layer=i)
            weight, bias = nodes[w_name], nodes[b_name]
            expected = (spec.widths[i + 1], spec.widths[i])
            if weight.shape != expected or bias.shape != (1, expected[0]):
                raise ShapeError(f"weight {weight.shape} / bias {bias.shape}, expected {expected}", layer=i)
            h = add(matmul(h, transpose(weight)), bias)
            if i < spec.num_layers - 1:
                h = activate(h, spec.hidden_activation, spec.leaky_slope)
            else:
                h = activate(h, spec.output_activation)
    return h, tape


def grad_input_differentiable(spec: MlpSpec, params: ParameterSet, x: Union[ArrayLike, Node],
                              output_index: Optional[int] = None,
                              tape: Optional[Tape] = None) -> tuple[Node, Tape]:
    """dD(x)/dx recorded on the tape, so penalties on it can be differentiated w.r.t. params.

    Rows of a batch are independent, so the gradient of the summed output is
    the per-row input gradient.
    """
    tape = tape if tape is not None else Tape()
    with tape:
        x_node = x if isinstance(x, Node) else tape.variable(x, name="input")
        if not x_node.requires_grad:
            x_node = tape.variable(x_node.value, name="input")
        out, _ = mlp_forward(spec, params, x_node, tape=tape)
        if output_index is None:
            if out.shape[1] != 1:
                raise ContractError(f"critic output must be scalar, got width {out.shape[1]}")
            score = out
        else:
            score = columns(out, output_index, output_index + 1)
        (g,) = gradients(sum(score), [x_node], create_graph=True)
        if g is None:
            g = tape.constant(np.zeros_like(x_node.value))
    return g, tape


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: ParameterSet
    v: ParameterSet
    step: int = 0

    @classmethod
    def zeros(cls, params: ParameterSet) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0)

    def to_dict(self) -> dict:
        return {"m": self.m.to_dict(), "v": self.v.to_dict(), "step": self.step}

    @classmethod
    def from_dict(cls, data: dict) -> "AdamState":
        return cls(ParameterSet.from_dict(data["m"]), ParameterSet.from_dict(data["v"]), int(data["step"]))


def adam_step(params: ParameterSet, grads: ParameterSet, state: AdamState,
              hyper: AdamHyper) -> tuple[ParameterSet, AdamState]:
    """One bias-corrected Adam update; returns new params and state"""
    if params.shapes() != grads.shapes():
        raise ShapeError("gradient blocks do not match parameter blocks")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergenceError(f"non-finite gradient in {name}")
    t = state.step + 1
    b1, b2 = hyper.beta1, hyper.beta2
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params[name] = p - hyper.step_size * m_hat / (np.sqrt(v_hat) + hyper.eps)
        new_m[name], new_v[name] = m, v
    return ParameterSet(new_params), AdamState(ParameterSet(new_m), ParameterSet(new_v), t)
