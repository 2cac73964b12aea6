"""YOLOv7-style topology as a typed DAG.

A graph is described by top-level :class:`LayerSpec` rows (one per line of
the architecture table) and expanded into primitive :class:`Node` objects:
``input``, ``conv``, ``maxpool``, ``concat`` and ``upsample``. Block rows
expand as follows (``F`` = row filters):

* ELAN: two 1x1 entry convs of ``F/4`` channels, a chain of ``2 * (repeat + 1)``
  3x3 convs, concatenation of both entries with every second chain output,
  then a 1x1 transition to ``F``.
* SPPCSPC: CSP split at ``F/2``; the main path runs 1x1, 3x3, 1x1, max-pools
  5/9/13 (stride 1) concatenated with their input, 1x1, 3x3 (plus
  ``repeat - 1`` extra 3x3); it is concatenated with a 1x1 shortcut and
  fused by a 1x1 to ``F``.
* C3: inputs concatenated, then CSP with ``repeat`` bottlenecks (1x1 then
  3x3, no residual) at ``F/2``, shortcut 1x1, concat, 1x1 to ``F``.
* head: one 1x1 conv per input scale emitting
  ``anchors * (5 + num_classes)`` channels.

Every conv uses same-padding ``k // 2``.
"""
from __future__ import annotations

import dataclasses
import graphlib
import math
from dataclasses import dataclass, field
from typing import Optional


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class TensorShape:
    channels: int
    height: int
    width: int

    def __post_init__(self) -> None:
        if min(self.channels, self.height, self.width) <= 0:
            raise ShapeError(f"non-positive tensor shape {self}")

    @property
    def spatial(self) -> tuple[int, int]:
        return (self.height, self.width)

    def __str__(self) -> str:
        return f"{self.height} × {self.width} × {self.channels}"


KINDS = ("conv", "elan", "sppcspc", "upsample", "c3", "head")


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    activation: str = "silu"
    filters: Optional[int] = None
    kernel: int = 1
    stride: int = 1
    repeat: int = 1
    inputs: tuple[str, ...] = ()  # empty: the previous row
    table_size: Optional[tuple[int, int]] = None  # (H, W) listed in the architecture table
    label: Optional[str] = None  # display name when ``name`` had to be made unique

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")
        if self.activation not in ("silu", "none"):
            raise ValueError(f"{self.name}: unknown activation {self.activation!r}")
        if self.kind == "conv" and (self.kernel < 1 or self.stride < 1):
            raise ValueError(f"{self.name}: conv needs kernel >= 1 and stride >= 1")
        if self.repeat < 1:
            raise ValueError(f"{self.name}: repeat must be >= 1")
        if self.kind in ("conv", "elan", "sppcspc", "c3") and not self.filters:
            raise ValueError(f"{self.name}: {self.kind} needs filters")

    @property
    def display(self) -> str:
        return self.label or self.name


@dataclass(frozen=True)
class Node:
    name: str
    op: str
    inputs: tuple[str, ...]
    block: str
    filters: int = 0
    kernel: int = 1
    stride: int = 1
    activation: str = "none"

    @property
    def padding(self) -> int:
        return self.kernel // 2


@dataclass(frozen=True)
class BlockConfig:
    elan_hidden: float = 0.25
    csp_hidden: float = 0.5
    pool_kernels: tuple[int, ...] = (5, 9, 13)
    anchors: int = 3


@dataclass
class NetGraph:
    rows: list[LayerSpec]
    input_shape: TensorShape
    num_classes: int = 6
    config: BlockConfig = field(default_factory=BlockConfig)
    nodes: list[Node] = field(init=False)
    row_outputs: dict[str, tuple[str, ...]] = field(init=False)

    def __post_init__(self) -> None:
        names = [r.name for r in self.rows]
        if len(set(names)) != len(names):
            raise ValueError("row names must be unique")
        self.nodes, self.row_outputs = _expand(self)
        self.topological_order()

    def node(self, name: str) -> Node:
        return self._index[name]

    @property
    def _index(self) -> dict[str, Node]:
        return {n.name: n for n in self.nodes}

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [(src, n.name) for n in self.nodes for src in n.inputs]

    def topological_order(self) -> list[str]:
        ts = graphlib.TopologicalSorter({n.name: n.inputs for n in self.nodes})
        try:
            order = list(ts.static_order())
        except graphlib.CycleError as exc:
            raise ShapeError(f"graph has a cycle: {exc.args[1]}") from None
        known = {n.name for n in self.nodes}
        dangling = [s for s in order if s not in known]
        if dangling:
            raise ShapeError(f"unknown inputs {dangling}")
        return order

    @property
    def outputs(self) -> tuple[str, ...]:
        return self.row_outputs[self.rows[-1].name]


def _expand(g: NetGraph) -> tuple[list[Node], dict[str, tuple[str, ...]]]:
    nodes = [Node("Image", "input", (), block="Image")]
    outputs: dict[str, tuple[str, ...]] = {"Image": ("Image",)}
    prev = "Image"
    cfg = g.config
    for row in g.rows:
        srcs = tuple(outputs[s][0] for s in row.inputs) if row.inputs else (prev,)
        new, outs = _expand_row(row, srcs, cfg, g.num_classes)
        nodes.extend(new)
        outputs[row.name] = outs
        prev = outs[0]
    return nodes, outputs


def _expand_row(row: LayerSpec, srcs, cfg: BlockConfig, num_classes: int):
    nodes: list[Node] = []
    act = row.activation
    name = row.name

    def conv(n, src, filters, k=1, s=1, activation=act):
        nodes.append(Node(n, "conv", (src,), name, filters, k, s, activation))
        return n

    def concat(n, parts):
        nodes.append(Node(n, "concat", tuple(parts), name))
        return n

    def entry():
        return srcs[0] if len(srcs) == 1 else concat(f"{name}.in", srcs)

    if row.kind == "conv":
        x = entry()
        for i in range(row.repeat - 1):
            x = conv(f"{name}.{i}", x, row.filters, row.kernel, row.stride if i == 0 else 1)
        conv(name, x, row.filters, row.kernel, row.stride if row.repeat == 1 else 1)
        return nodes, (name,)

    if row.kind == "upsample":
        x = entry()
        nodes.append(Node(name, "upsample", (x,), name))
        return nodes, (name,)

    if row.kind == "elan":
        x = entry()
        c = max(1, int(row.filters * cfg.elan_hidden))
        a = conv(f"{name}.cv1", x, c)
        b = conv(f"{name}.cv2", x, c)
        parts = [a, b]
        y = b
        for i in range(2 * (row.repeat + 1)):
            y = conv(f"{name}.m{i}", y, c, 3)
            if i % 2 == 1:
                parts.append(y)
        cat = concat(f"{name}.cat", parts[::-1])
        conv(name, cat, row.filters)
        return nodes, (name,)

    if row.kind == "sppcspc":
        x = entry()
        c = max(1, int(row.filters * cfg.csp_hidden))
        y = conv(f"{name}.cv1", x, c)
        y = conv(f"{name}.cv3", y, c, 3)
        y = conv(f"{name}.cv4", y, c)
        pools = []
        for k in cfg.pool_kernels:
            nodes.append(Node(f"{name}.m{k}", "maxpool", (y,), name, kernel=k))
            pools.append(f"{name}.m{k}")
        y = concat(f"{name}.spp", [y, *pools])
        y = conv(f"{name}.cv5", y, c)
        y = conv(f"{name}.cv6", y, c, 3)
        for i in range(row.repeat - 1):
            y = conv(f"{name}.cv6.{i}", y, c, 3)
        short = conv(f"{name}.cv2", x, c)
        y = concat(f"{name}.cat", [y, short])
        conv(name, y, row.filters)
        return nodes, (name,)

    if row.kind == "c3":
        x = entry()
        c = max(1, int(row.filters * cfg.csp_hidden))
        y = conv(f"{name}.cv1", x, c)
        for i in range(row.repeat):
            y = conv(f"{name}.b{i}.cv1", y, c)
            y = conv(f"{name}.b{i}.cv2", y, c, 3)
        short = conv(f"{name}.cv2", x, c)
        y = concat(f"{name}.cat", [y, short])
        conv(name, y, row.filters)
        return nodes, (name,)

    if row.kind == "head":
        width = cfg.anchors * (5 + num_classes)
        outs = tuple(
            conv(f"{name}.p{i}", src, width) for i, src in enumerate(srcs)
        )
        return nodes, outs

    raise ValueError(f"cannot expand {row.kind}")


def yolov7_rows() -> list[LayerSpec]:
    """Rows of the YOLOv7 architecture table for a 640 × 640 input."""
    silu = "silu"
    return [
        LayerSpec("Conv0", "conv", silu, 32, 3, 2, table_size=(320, 320)),
        LayerSpec("Conv1", "conv", silu, 64, 3, 2, table_size=(160, 160)),
        LayerSpec("Conv2", "conv", silu, 128, 3, 2, table_size=(80, 80)),
        LayerSpec("Conv3", "conv", silu, 256, 3, 2, table_size=(40, 40)),
        LayerSpec("ELAN0", "elan", silu, 256, table_size=(40, 40)),
        LayerSpec("Conv4", "conv", silu, 512, 3, 2, table_size=(20, 20)),
        LayerSpec("ELAN1", "elan", silu, 512, table_size=(20, 20)),
        LayerSpec("Conv5", "conv", silu, 1024, 3, 2, table_size=(10, 10)),
        LayerSpec("ELAN2", "elan", silu, 1024, table_size=(10, 10)),
        LayerSpec("SPPCSPC", "sppcspc", silu, 1024, table_size=(10, 10)),
        LayerSpec("Conv6", "conv", silu, 512, 1, 1, table_size=(20, 20)),
        LayerSpec("Upsample0", "upsample", "none", table_size=(20, 20), label="Upsample"),
        LayerSpec("C3_0", "c3", silu, 256, inputs=("Upsample0", "ELAN1"), table_size=(20, 20), label="C3"),
        LayerSpec("Upsample1", "upsample", "none", table_size=(40, 40), label="Upsample"),
        LayerSpec("C3_1", "c3", silu, 128, inputs=("Upsample1", "ELAN0"), table_size=(40, 40), label="C3"),
        LayerSpec("Head", "head", silu, inputs=("C3_1", "C3_0", "SPPCSPC")),
    ]


def build_table1_graph(num_classes: int = 6, config: BlockConfig = BlockConfig()) -> NetGraph:
    return NetGraph(yolov7_rows(), TensorShape(3, 640, 640), num_classes, config)


def conv_out_shape(
    shape: TensorShape,
    kernel: int,
    stride: int = 1,
    padding: Optional[int] = None,
    filters: Optional[int] = None,
) -> TensorShape:
    """``floor((H + 2p - k) / s) + 1`` per spatial axis; same-padding by default."""
    p = kernel // 2 if padding is None else padding
    h = (shape.height + 2 * p - kernel) // stride + 1
    w = (shape.width + 2 * p - kernel) // stride + 1
    if h <= 0 or w <= 0:
        raise ShapeError(f"conv k={kernel} s={stride} p={p} on {shape} gives {h}x{w}")
    return TensorShape(filters or shape.channels, h, w)


@dataclass
class Discrepancy:
    layer: str
    computed: tuple[int, int]
    table: tuple[int, int]

    def __str__(self) -> str:
        return (f"{self.layer}: computed {self.computed[0]} × {self.computed[1]}, "
                f"table lists {self.table[0]} × {self.table[1]}")


@dataclass
class ShapeReport:
    shapes: dict[str, TensorShape]
    discrepancies: list[Discrepancy]

    def row_shapes(self, g: NetGraph) -> dict[str, list[TensorShape]]:
        return {r.name: [self.shapes[o] for o in g.row_outputs[r.name]] for r in g.rows}


def propagate_shapes(g: NetGraph, input_shape: Optional[TensorShape] = None) -> ShapeReport:
    """Per-node output shapes plus every row whose size disagrees with its table entry.

    Table entries are compared only when propagating the graph's own input size.
    """
    shapes: dict[str, TensorShape] = {}
    inp = input_shape or g.input_shape
    index = g._index
    for name in g.topological_order():
        n = index[name]
        ins = [shapes[s] for s in n.inputs]
        if n.op == "input":
            shapes[name] = inp
        elif n.op == "conv":
            shapes[name] = conv_out_shape(ins[0], n.kernel, n.stride, n.padding, n.filters)
        elif n.op == "maxpool":
            shapes[name] = conv_out_shape(ins[0], n.kernel, 1, n.padding)
        elif n.op == "upsample":
            s = ins[0]
            shapes[name] = TensorShape(s.channels, 2 * s.height, 2 * s.width)
        elif n.op == "concat":
            spatial = {s.spatial for s in ins}
            if len(spatial) != 1:
                raise ShapeError(f"{name}: concatenated inputs disagree on spatial size {sorted(spatial)}")
            shapes[name] = TensorShape(sum(s.channels for s in ins), *ins[0].spatial)
        else:
            raise ShapeError(f"{name}: unknown op {n.op}")
    discrepancies = []
    if inp == g.input_shape:
        for row in g.rows:
            if row.table_size is None:
                continue
            got = shapes[g.row_outputs[row.name][0]].spatial
            if got != tuple(row.table_size):
                discrepancies.append(Discrepancy(row.name, got, tuple(row.table_size)))
    return ShapeReport(shapes, discrepancies)


def conv_params(kernel: int, c_in: int, c_out: int) -> int:
    return kernel * kernel * c_in * c_out + c_out


@dataclass
class ParamCount:
    per_node: dict[str, int]
    per_row: dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.per_node.values())


def count_parameters(g: NetGraph) -> ParamCount:
    shapes = propagate_shapes(g).shapes
    per_node = {}
    for n in g.nodes:
        if n.op == "conv":
            per_node[n.name] = conv_params(n.kernel, shapes[n.inputs[0]].channels, n.filters)
        else:
            per_node[n.name] = 0
    per_row = {r.name: 0 for r in g.rows}
    for n in g.nodes:
        if n.block in per_row:
            per_row[n.block] += per_node[n.name]
    return ParamCount(per_node, per_row)


def parameter_shapes(g: NetGraph) -> dict[str, tuple[int, ...]]:
    """``<node>.weight`` (out, in, k, k) and ``<node>.bias`` (out,) for every conv."""
    shapes = propagate_shapes(g).shapes
    out = {}
    for n in g.nodes:
        if n.op == "conv":
            c_in = shapes[n.inputs[0]].channels
            out[f"{n.name}.weight"] = (n.filters, c_in, n.kernel, n.kernel)
            out[f"{n.name}.bias"] = (n.filters,)
    return out


def _scale_width(filters: int, factor: float) -> int:
    scaled = math.floor(filters * factor + 0.5)
    return max(8, 8 * math.ceil(scaled / 8))


def compound_scale(g: NetGraph, depth_factor: float, width_factor: float) -> NetGraph:
    """Scale block repeats by ``depth_factor`` and filters by ``width_factor``.

    Filters are rounded then lifted to a multiple of 8; repeats become
    ``max(1, round(repeat * depth_factor))``. Upsample and head rows keep their
    structure. Internal block widths and concatenation fan-ins follow from
    re-expanding the scaled rows.
    """
    if depth_factor <= 0 or width_factor <= 0:
        raise ValueError("scaling factors must be > 0")
    rows = []
    for r in g.rows:
        changes = {}
        if r.kind not in ("upsample", "head"):
            changes["repeat"] = max(1, math.floor(r.repeat * depth_factor + 0.5))
            if width_factor != 1 and r.filters:
                changes["filters"] = _scale_width(r.filters, width_factor)
        rows.append(dataclasses.replace(r, **changes))
    return NetGraph(rows, g.input_shape, g.num_classes, g.config)
