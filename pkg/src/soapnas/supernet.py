"""One-shot weight-sharing network over the cell space.

Macro layout: a 3x3 stem conv (with BN+ReLU) into ``channels``, a stack of
supercells, and a 1x1 head conv producing per-pixel logits. Inside a cell,
every incoming edge applies its own shared 1x1 projection, projections are
summed, and the node's operation (conv+BN+ReLU, or a bare 3x3 maxpool) is
applied to the sum. Interior nodes of a canonical cell occupy slots by
index and the output node is pinned to the last slot, so every valid cell
maps to a unique sub-network and isomorphic cells map to the same one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cellspace as cs
from . import metrics
from . import nnkernel as nk
from . import synthroute as sr
from .errors import BadConfig, InsufficientData, NumericalDivergence
from .rng import RngStream, root

EVAL_CHUNK = 32

# Global gradient-norm ceiling for SGD steps. Random-path sharing can
# route a batch through cells with little normalization, where a dead
# channel's batchnorm backward amplifies gradients enough to overflow
# float32 within a few epochs; clipping keeps every path's update bounded.
GRAD_CLIP_NORM = 5.0


@dataclass(frozen=True)
class MacroConfig:
    in_channels: int = 3
    channels: int = 16
    n_cells: int = 3
    calibration_maps: int = 16

    def __post_init__(self):
        if min(self.in_channels, self.channels, self.n_cells, self.calibration_maps) < 1:
            raise BadConfig("macro config values must be positive")


@dataclass(frozen=True)
class TrainHyper:
    epochs: int
    lr: float
    batch_size: int
    ghost_size: int
    momentum: float = 0.9

    def __post_init__(self):
        if self.epochs < 0 or self.lr <= 0 or self.batch_size < 1 or self.ghost_size < 1:
            raise BadConfig("bad training hyperparameters")
        if self.batch_size % self.ghost_size != 0:
            raise BadConfig(
                f"batch size {self.batch_size} not divisible by ghost size {self.ghost_size}"
            )


def paper_hyper() -> TrainHyper:
    return TrainHyper(epochs=240, lr=0.02, batch_size=32, ghost_size=8)


def desk_hyper(epochs: int = 8) -> TrainHyper:
    return TrainHyper(epochs=epochs, lr=0.02, batch_size=16, ghost_size=8)


@dataclass(frozen=True)
class QueryResult:
    arch: str  # canonical serialization
    arch_hash: str
    auc: float
    acc: float
    supernet_id: str


_BN_FIELDS = ("scale", "shift", "rmean", "rvar")
_CONV_OPS = {cs.CONV3X3: 3, cs.CONV1X1: 1}


def _edge_names(cell: int, si: int, sj: int):
    stem = f"cell{cell}.e{si}_{sj}"
    return f"{stem}.w", f"{stem}.b"


def _op_prefix(cell: int, slot: int, op: str) -> str:
    return f"cell{cell}.n{slot}.{op}"


class CellNetwork:
    """Shared parameter store plus forward/backward over any in-space cell."""

    def __init__(self, space: cs.SpaceConfig, macro: MacroConfig, params: dict, seed: int):
        self.space = space
        self.macro = macro
        self.params = params
        self.seed = seed

    # -- parameter construction -------------------------------------------

    @staticmethod
    def _init_conv(params, prefix, out_ch, in_ch, k, rng, with_bn):
        params[f"{prefix}.w"] = nk.he_uniform(
            (out_ch, in_ch, k, k), in_ch * k * k, rng.child("init", f"{prefix}.w")
        )
        params[f"{prefix}.b"] = np.zeros(out_ch, dtype=np.float32)
        if with_bn:
            params[f"{prefix}.bn.scale"] = np.ones(out_ch, dtype=np.float32)
            params[f"{prefix}.bn.shift"] = np.zeros(out_ch, dtype=np.float32)
            params[f"{prefix}.bn.rmean"] = np.zeros(out_ch, dtype=np.float32)
            params[f"{prefix}.bn.rvar"] = np.ones(out_ch, dtype=np.float32)

    @classmethod
    def build_supernet(cls, space: cs.SpaceConfig, macro: MacroConfig, seed: int):
        """All (slot, op) parameter sets and all slot-edge projections."""
        rng = root(seed).child("supernet")
        params: dict[str, np.ndarray] = {}
        ch = macro.channels
        cls._init_conv(params, "stem", ch, macro.in_channels, 3, rng, with_bn=True)
        m = space.max_nodes
        for cell in range(macro.n_cells):
            for si in range(m):
                for sj in range(si + 1, m):
                    cls._init_conv(params, f"cell{cell}.e{si}_{sj}", ch, ch, 1, rng, with_bn=False)
            for slot in range(1, m - 1):
                for op in space.ops:
                    if op in _CONV_OPS:
                        cls._init_conv(
                            params, _op_prefix(cell, slot, op), ch, ch, _CONV_OPS[op], rng, with_bn=True
                        )
        cls._init_conv(params, "head", 1, ch, 1, rng, with_bn=False)
        return cls(space, macro, params, seed)

    @classmethod
    def build_standalone(cls, arch: cs.CellArchitecture, space: cs.SpaceConfig, macro: MacroConfig, seed: int):
        """Only the given cell's path is instantiated."""
        canon = cs.canonicalize(arch, space)
        rng = root(seed).child("standalone")
        params: dict[str, np.ndarray] = {}
        ch = macro.channels
        cls._init_conv(params, "stem", ch, macro.in_channels, 3, rng, with_bn=True)
        m = space.max_nodes
        for cell in range(macro.n_cells):
            for i, j in canon.edges:
                si = cs.slot_of_node(i, canon.num_nodes, m)
                sj = cs.slot_of_node(j, canon.num_nodes, m)
                cls._init_conv(params, f"cell{cell}.e{si}_{sj}", ch, ch, 1, rng, with_bn=False)
            for node in range(1, canon.num_nodes - 1):
                op = canon.ops[node - 1]
                if op in _CONV_OPS:
                    slot = cs.slot_of_node(node, canon.num_nodes, m)
                    cls._init_conv(
                        params, _op_prefix(cell, slot, op), ch, ch, _CONV_OPS[op], rng, with_bn=True
                    )
        cls._init_conv(params, "head", 1, ch, 1, rng, with_bn=False)
        return cls(space, macro, params, seed)

    # -- execution ---------------------------------------------------------

    def _bn_state(self, prefix: str, params: dict) -> nk.BnState:
        return nk.BnState(
            scale=params[f"{prefix}.bn.scale"],
            shift=params[f"{prefix}.bn.shift"],
            running_mean=params[f"{prefix}.bn.rmean"],
            running_var=params[f"{prefix}.bn.rvar"],
        )

    def _conv_bn_relu(self, prefix, x, mode, ghost, params):
        z, c_conv = nk.conv2d_forward(x, params[f"{prefix}.w"], params[f"{prefix}.b"])
        zb, c_bn = nk.ghost_bn_forward(z, self._bn_state(prefix, params), ghost, mode)
        out, c_relu = nk.relu_forward(zb)
        return out, (c_conv, c_bn, c_relu)

    def _forward_cell(self, cell, arch, x, mode, ghost, params):
        n = arch.num_nodes
        m = self.space.max_nodes
        h = {0: x}
        tape = {"edges": {}, "nodes": {}}
        for j in range(1, n):
            agg = None
            for i in arch.predecessors(j):
                si = cs.slot_of_node(i, n, m)
                sj = cs.slot_of_node(j, n, m)
                wn, bn_ = _edge_names(cell, si, sj)
                y, cache = nk.conv2d_forward(h[i], params[wn], params[bn_])
                tape["edges"][(i, j)] = cache
                agg = y if agg is None else agg + y
            if j < n - 1:
                op = arch.ops[j - 1]
                if op == cs.MAXPOOL3X3:
                    out, cache = nk.maxpool3_forward(agg)
                    tape["nodes"][j] = ("pool", cache)
                else:
                    slot = cs.slot_of_node(j, n, m)
                    out, caches = self._conv_bn_relu(
                        _op_prefix(cell, slot, op), agg, mode, ghost, params
                    )
                    tape["nodes"][j] = ("conv", caches)
                h[j] = out
            else:
                h[j] = agg
        return h[n - 1], tape

    def _backward_cell(self, cell, arch, dout, tape, grads):
        n = arch.num_nodes
        m = self.space.max_nodes
        dh = {n - 1: dout}
        for j in range(n - 1, 0, -1):
            d = dh.pop(j)
            if j < n - 1:
                kind, caches = tape["nodes"][j]
                if kind == "pool":
                    dagg = nk.maxpool3_backward(d, caches)
                else:
                    c_conv, c_bn, c_relu = caches
                    dz = nk.relu_backward(d, c_relu)
                    dzb, dscale, dshift = nk.ghost_bn_backward(dz, c_bn)
                    slot = cs.slot_of_node(j, n, m)
                    prefix = _op_prefix(cell, slot, arch.ops[j - 1])
                    _acc(grads, f"{prefix}.bn.scale", dscale)
                    _acc(grads, f"{prefix}.bn.shift", dshift)
                    dagg, dw, db = nk.conv2d_backward(dzb, c_conv)
                    _acc(grads, f"{prefix}.w", dw)
                    _acc(grads, f"{prefix}.b", db)
            else:
                dagg = d
            for i in arch.predecessors(j):
                si = cs.slot_of_node(i, n, m)
                sj = cs.slot_of_node(j, n, m)
                wn, bn_ = _edge_names(cell, si, sj)
                dxi, dw, db = nk.conv2d_backward(dagg, tape["edges"][(i, j)])
                _acc(grads, wn, dw)
                _acc(grads, bn_, db)
                dh[i] = dxi if i not in dh else dh[i] + dxi
        return dh[0]

    def forward(self, arch, x, mode, ghost_size=0, params=None):
        """Logits for a batch; returns (logits, tape) — tape only in train mode."""
        params = self.params if params is None else params
        out, c_stem = self._conv_bn_relu("stem", x, mode, ghost_size, params)
        cell_tapes = []
        for cell in range(self.macro.n_cells):
            out, tape = self._forward_cell(cell, arch, out, mode, ghost_size, params)
            cell_tapes.append(tape)
        logits, c_head = nk.conv2d_forward(out, params["head.w"], params["head.b"])
        logits = logits[:, 0]  # (N, H, W)
        if mode != "train":
            return logits, None
        return logits, (c_stem, cell_tapes, c_head)

    def loss_and_grads(self, arch, x, labels, ghost_size):
        logits, tape = self.forward(arch, x, "train", ghost_size)
        loss, c_loss = nk.sigmoid_bce_forward(logits, labels)
        c_stem, cell_tapes, c_head = tape
        grads: dict[str, np.ndarray] = {}
        dlogits = nk.sigmoid_bce_backward(c_loss)[:, None]
        dout, dw, db = nk.conv2d_backward(dlogits, c_head)
        _acc(grads, "head.w", dw)
        _acc(grads, "head.b", db)
        for cell in range(self.macro.n_cells - 1, -1, -1):
            dout = self._backward_cell(cell, arch, dout, cell_tapes[cell], grads)
        c_conv, c_bn, c_relu = c_stem
        dz = nk.relu_backward(dout, c_relu)
        dzb, dscale, dshift = nk.ghost_bn_backward(dz, c_bn)
        _acc(grads, "stem.bn.scale", dscale)
        _acc(grads, "stem.bn.shift", dshift)
        _, dw, db = nk.conv2d_backward(dzb, c_conv)
        _acc(grads, "stem.w", dw)
        _acc(grads, "stem.b", db)
        return loss, grads

    def predict_probs(self, arch, maps, params=None):
        """Eval-mode probabilities over a list of maps, chunked."""
        probs = []
        for start in range(0, len(maps), EVAL_CHUNK):
            x = sr.stack_features(maps[start : start + EVAL_CHUNK])
            logits, _ = self.forward(arch, x, "eval", params=params)
            probs.append(nk.sigmoid(logits))
        return np.concatenate(probs, axis=0)


def _acc(grads: dict, name: str, g: np.ndarray) -> None:
    if name in grads:
        grads[name] += g
    else:
        grads[name] = g


def count_parameters(net: CellNetwork) -> int:
    return sum(int(p.size) for p in net.params.values())


def _train(net: CellNetwork, dataset: sr.PlacementDataset, hyper: TrainHyper, rng: RngStream, draw_arch):
    train_maps = dataset.subset(sr.TRAIN)
    if not train_maps:
        raise BadConfig("dataset has no train split")
    x_all = sr.stack_features(train_maps)
    y_all = sr.stack_labels(train_maps).astype(np.float32)
    n = len(train_maps)
    velocities: dict[str, np.ndarray] = {}
    trace = []
    for epoch in range(hyper.epochs):
        order = rng.child("shuffle", epoch).generator().permutation(n)
        losses = []
        for b_idx, start in enumerate(range(0, n, hyper.batch_size)):
            batch = order[start : start + hyper.batch_size]
            if len(batch) % hyper.ghost_size != 0:
                continue  # trailing remainder incompatible with ghost grouping
            arch = draw_arch(rng.child("path", epoch, b_idx))
            loss, grads = net.loss_and_grads(
                arch, x_all[batch], y_all[batch], hyper.ghost_size
            )
            if not np.isfinite(loss):
                raise NumericalDivergence(
                    f"non-finite loss {loss} at epoch {epoch} batch {b_idx}"
                )
            norm_sq = sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values())
            if norm_sq > GRAD_CLIP_NORM * GRAD_CLIP_NORM:
                scale = np.float32(GRAD_CLIP_NORM / np.sqrt(norm_sq))
                for g in grads.values():
                    g *= scale
            nk.sgd_step(net.params, grads, velocities, hyper.lr, hyper.momentum)
            losses.append(loss)
        trace.append(float(np.mean(losses)) if losses else float("nan"))
    return trace


def train_oneshot(net: CellNetwork, dataset: sr.PlacementDataset, hyper: TrainHyper, rng: RngStream):
    """Random-path one-shot training; one cell drawn per batch."""

    def draw(stream: RngStream):
        return cs.sample_random(net.space, stream)

    return _train(net, dataset, hyper, rng, draw)


def _pooled_metrics(probs: np.ndarray, maps) -> tuple[float, float]:
    labels = sr.stack_labels(maps).ravel()
    flat = probs.reshape(-1)
    return metrics.roc_auc(flat, labels), metrics.accuracy(flat, labels)


def query(
    net: CellNetwork,
    arch: cs.CellArchitecture,
    dataset: sr.PlacementDataset,
    supernet_id: str = "0",
) -> QueryResult:
    """BN-recalibrated eval of one cell on the validation split.

    The network itself is left untouched: calibration statistics are
    written to copies of the running arrays, so concurrent queries against
    a frozen supernet are safe.
    """
    canon = cs.canonicalize(arch, net.space)
    qparams = {
        name: (arr.copy() if name.endswith((".rmean", ".rvar")) else arr)
        for name, arr in net.params.items()
    }
    cal_maps = dataset.subset(sr.TRAIN)[: net.macro.calibration_maps]
    if not cal_maps:
        raise BadConfig("dataset has no train maps for BN calibration")
    net.forward(canon, sr.stack_features(cal_maps), "calibrate", params=qparams)
    val_maps = dataset.subset(sr.VAL)
    if not val_maps:
        raise BadConfig("dataset has no val split")
    probs = net.predict_probs(canon, val_maps, params=qparams)
    auc, acc = _pooled_metrics(probs, val_maps)
    return QueryResult(
        arch=cs.serialize(canon),
        arch_hash=cs.arch_hash(canon, net.space),
        auc=auc,
        acc=acc,
        supernet_id=supernet_id,
    )


def train_standalone(
    arch: cs.CellArchitecture,
    dataset: sr.PlacementDataset,
    space: cs.SpaceConfig,
    macro: MacroConfig,
    hyper: TrainHyper,
    seed: int,
) -> tuple[QueryResult, CellNetwork]:
    """Fresh single-path network trained from scratch, scored on the test split."""
    canon = cs.canonicalize(arch, space)
    net = CellNetwork.build_standalone(canon, space, macro, seed)
    _train(net, dataset, hyper, root(seed).child("standalone-train"), lambda _s: canon)
    test_maps = dataset.subset(sr.TEST)
    if not test_maps:
        raise BadConfig("dataset has no test split")
    probs = net.predict_probs(canon, test_maps)
    auc, acc = _pooled_metrics(probs, test_maps)
    result = QueryResult(
        arch=cs.serialize(canon),
        arch_hash=cs.arch_hash(canon, space),
        auc=auc,
        acc=acc,
        supernet_id="standalone",
    )
    return result, net


@dataclass(frozen=True)
class CorrelationReport:
    pearson: float
    kendall_tau: float
    best_queried_auc: float
    n_archs: int


def evaluate_correlation(
    net: CellNetwork,
    dataset: sr.PlacementDataset,
    archs,
    ground_truth,
    supernet_id: str = "0",
) -> CorrelationReport:
    """Rank agreement between queried and ground-truth AUC for the same cells.

    ``ground_truth`` maps arch hash to measured AUC (a dict, or a list of
    QueryResult).
    """
    if not isinstance(ground_truth, dict):
        ground_truth = {r.arch_hash: r.auc for r in ground_truth}
    archs = list(archs)
    if len(archs) < 3:
        raise InsufficientData(f"need at least 3 archs, got {len(archs)}")
    queried = []
    truth = []
    for arch in archs:
        res = query(net, arch, dataset, supernet_id)
        if res.arch_hash not in ground_truth:
            raise InsufficientData(f"ground truth missing for {res.arch_hash}")
        queried.append(res.auc)
        truth.append(ground_truth[res.arch_hash])
    return CorrelationReport(
        pearson=metrics.pearson(queried, truth),
        kendall_tau=metrics.kendall_tau(queried, truth),
        best_queried_auc=max(queried),
        n_archs=len(archs),
    )
