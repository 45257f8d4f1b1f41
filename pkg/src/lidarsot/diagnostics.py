"""Self-checks shipped with the package: the finite-difference suite and brute-force oracles.

Both back CLI subcommands (``gradcheck`` and ``selftest``) and return
lists of named results so callers can print one line per check.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import numerics as nx
from .attention import CrossAttention, SelfAttention
from .config import RunConfig, toy_config
from .decoder import Conv3DBlock, DecomposedBlock, HeadOutputs, decode_box
from .encoder import GridGeometry
from .evalkit import CategoryResult, aggregate, iou3d
from .geometry import Box3D
from .model import PyramidTracker
from .numerics import Tensor
from .numerics import functional as F
from .pointops import PointCloud, SetAbstraction, ball_query, fps, knn
from .supervision import construct_labels, total_loss

OP_TOL = 1e-4
END_TO_END_TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: value={self.value:.3g} tol={self.tolerance:.3g}{extra}"


# -- finite-difference suite ---------------------------------------------------
def _leaf(rng, *shape, positive=False):
    data = rng.uniform(0.5, 1.5, size=shape) if positive else rng.normal(size=shape)
    return Tensor(data, requires_grad=True)


def _proj(rng, out: Tensor | tuple) -> Tensor:
    """Random linear functional of one or more outputs, so every output coordinate matters."""
    outs = out if isinstance(out, tuple) else (out,)
    total = None
    for o in outs:
        w = np.random.default_rng(int(rng.integers(1 << 31))).normal(size=o.shape)
        term = (o * w).sum()
        total = term if total is None else total + term
    return total


def _module_case(module: nx.Module, inputs: list[Tensor], run: Callable[[], Tensor | tuple], rng):
    params = module.parameters()
    proj_seed = int(rng.integers(1 << 31))

    def f():
        return _proj(np.random.default_rng(proj_seed), run())

    return f, inputs + params


def _op_cases(rng) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    cases = {}
    a, b = _leaf(rng, 3, 4), _leaf(rng, 3, 4)
    pos = _leaf(rng, 3, 4, positive=True)
    m1, m2 = _leaf(rng, 3, 5), _leaf(rng, 5, 2)
    w = rng.normal(size=(3, 4))
    w_mm = rng.normal(size=(3, 2))
    w_g = rng.normal(size=(2, 2, 4))

    def c(name, fn, leaves):
        cases[f"op.{name}"] = (fn, leaves)

    c("add_broadcast", lambda: ((a + b[0]) * w).sum(), [a, b])
    c("sub", lambda: ((a - b) * w).sum(), [a, b])
    c("mul", lambda: ((a * b) * w).sum(), [a, b])
    c("div", lambda: ((a / pos) * w).sum(), [a, pos])
    c("power", lambda: ((pos**2.5) * w).sum(), [pos])
    c("exp", lambda: (nx.exp(a) * w).sum(), [a])
    c("log", lambda: (nx.log(pos) * w).sum(), [pos])
    c("abs", lambda: (nx.tabs(a) * w).sum(), [a])
    c("relu", lambda: (nx.relu(a) * w).sum(), [a])
    c("sigmoid", lambda: (nx.sigmoid(a) * w).sum(), [a])
    c("clip", lambda: (nx.clip(a, -0.5, 0.5) * w).sum(), [a])
    c("matmul", lambda: (nx.matmul(m1, m2) * w_mm).sum(), [m1, m2])
    c("reshape_transpose", lambda: (a.reshape(4, 3).transpose(1, 0) * w).sum(), [a])
    c("concat", lambda: (nx.concat([a, b], axis=1) * np.ones((3, 8))).sum(), [a, b])
    c("getitem", lambda: (a[1:, ::2] * w[1:, ::2]).sum(), [a])
    c("gather_repeat", lambda: (nx.gather(a, np.array([[0, 2], [2, 2]])) * w_g).sum(), [a])
    c("sum_mean", lambda: a.sum(axis=1).sum() + (a * w).mean(), [a])
    c("max", lambda: (a.max(axis=1) * np.arange(1, 4)).sum(), [a])
    c("softmax", lambda: (nx.softmax(a, axis=1) * w).sum(), [a])
    return cases


def _layer_cases(rng) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    cases = {}
    x2 = _leaf(rng, 6, 4)
    lin = nx.Linear(4, 3, rng)
    cases["layer.linear"] = _module_case(lin, [x2], lambda: lin(x2), rng)
    mlp = nx.MLP([4, 5, 3], rng, final_relu=True)
    cases["layer.mlp"] = _module_case(mlp, [x2], lambda: mlp(x2), rng)
    for dims in (1, 2, 3):
        spatial = (4,) * dims
        x = _leaf(rng, 1, *spatial, 2)
        conv = nx.Conv(2, 3, (3,) * dims, rng)
        cases[f"layer.conv{dims}d"] = _module_case(conv, [x], lambda conv=conv, x=x: conv(x), rng)
    bn = nx.BatchNorm(4)
    cases["layer.batchnorm_train"] = _module_case(bn, [x2], lambda: bn(x2), rng)
    xb = _leaf(rng, 1, 4, 4, 2)
    blk = nx.ConvBlock(2, 3, (3, 3), rng)
    cases["layer.conv_block"] = _module_case(blk, [xb], lambda: blk(xb), rng)
    vals = _leaf(rng, 7, 3)
    index = np.array([0, 2, 2, 5, 0, 1, 5])
    cases["layer.scatter_mean"] = (lambda: (F.scatter_mean(vals, index, 6)[0] * np.arange(18).reshape(6, 3)).sum(), [vals])
    return cases


def _cloud(rng, n, scale=1.0):
    return rng.uniform(-scale, scale, size=(n, 3))


def _block_cases(rng) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    cases = {}
    pos = _cloud(rng, 24)
    feat = _leaf(rng, 24, 2)
    sa_mod = SetAbstraction(2, 4, 8, 0.8, 4, rng)
    cases["module.set_abstraction"] = _module_case(sa_mod, [feat], lambda: sa_mod(pos, feat).features, rng)

    p1, p2 = _cloud(rng, 10), _cloud(rng, 8)
    x1, x2 = _leaf(rng, 10, 4), _leaf(rng, 8, 4)
    sa = SelfAttention(4, 4, rng)
    cases["module.self_attention"] = _module_case(sa, [x1], lambda: sa(x1, p1), rng)
    ca = CrossAttention(4, 4, rng)
    cases["module.cross_attention"] = _module_case(ca, [x1, x2], lambda: ca(x1, p1, x2, p2), rng)

    grid = _leaf(rng, 3, 4, 5, 2)
    dec = DecomposedBlock(2, 3, 3, rng)
    cases["module.decomposed_block"] = _module_case(dec, [grid], lambda: dec(grid), rng)
    full = Conv3DBlock(2, 3, 3, rng)
    cases["module.conv3d_block"] = _module_case(full, [grid], lambda: full(grid), rng)
    return cases


def _loss_case(rng, cfg: RunConfig):
    geom = GridGeometry.from_config(cfg.voxel)
    box = Box3D(0.1, -0.05, 0.02, 0.6, 1.2, 0.6, 0.1)
    labels = construct_labels(box, geom, cfg.loss.label_radius)
    H, L, W = geom.H, geom.L, geom.W
    bc = Tensor(rng.uniform(0.05, 0.95, size=(L, W)), requires_grad=True)
    br = _leaf(rng, 3, L, W)
    zc = Tensor(rng.uniform(0.05, 0.95, size=H), requires_grad=True)
    zr = _leaf(rng, 1, H)
    # keep regression residuals away from the L1 kink
    br.data[labels.bev_reg != 0] += 0.3
    zr.data += 0.3

    def f():
        return total_loss(HeadOutputs(bc, br, zc, zr), labels, cfg.loss)[0]

    return f, [bc, br, zc, zr]


def _end_to_end_case(cfg: RunConfig, seed: int):
    model = PyramidTracker(cfg, seed=seed, dtype=np.float64)
    model.eval()  # running statistics keep the objective a smooth function of every parameter
    rng = np.random.default_rng(seed)
    tmpl = PointCloud(rng.uniform(-0.5, 0.5, size=(cfg.data.template_points, 3)), rng.uniform(size=(cfg.data.template_points, 1)))
    srch = PointCloud(rng.uniform(-1.0, 1.0, size=(cfg.data.search_points, 3)) * [1.1, 0.8, 0.5], rng.uniform(size=(cfg.data.search_points, 1)))
    geom = model.geometry
    labels = construct_labels(Box3D(0.05, 0.02, 0.0, 0.6, 1.2, 0.6, 0.0), geom, cfg.loss.label_radius)

    def f():
        heads, _, _ = model(tmpl, srch)
        return total_loss(heads, labels, cfg.loss)[0]

    return f, model.parameters()


def gradcheck_suite(cfg: RunConfig | None = None, seed: int = 0, max_coords: int = 6) -> list[CheckResult]:
    """Central-difference checks of every op, layer, module, the loss and the whole model.

    Runs in float64. Parameter tensors larger than ``max_coords`` entries
    are checked at that many randomly drawn coordinates.
    """
    cfg = cfg or toy_config()
    rng = np.random.default_rng(seed)
    cases: dict[str, tuple] = {}
    cases.update(_op_cases(rng))
    cases.update(_layer_cases(rng))
    cases.update(_block_cases(rng))
    cases["loss.total"] = _loss_case(rng, cfg)
    results = []
    for name, (f, leaves) in cases.items():
        err = nx.grad_check(f, leaves, eps=1e-6, max_coords=max_coords, rng=np.random.default_rng(seed))
        results.append(CheckResult(f"grad.{name}", err, OP_TOL, err < OP_TOL))
    f, leaves = _end_to_end_case(cfg, seed)
    err = nx.grad_check(f, leaves, eps=1e-6, max_coords=2, rng=np.random.default_rng(seed))
    results.append(CheckResult("grad.end_to_end", err, END_TO_END_TOL, err < END_TO_END_TOL))
    return results


# -- brute-force oracles --------------------------------------------------------
def _sq(a, b) -> float:
    dx, dy, dz = a[0] - b[0], a[1] - b[1], a[2] - b[2]
    return dx * dx + dy * dy + dz * dz


def brute_fps(positions: np.ndarray, m: int, start: int = 0) -> list[int]:
    """Recomputes every min-distance from scratch each round; ties to lowest index."""
    chosen = [start]
    while len(chosen) < m:
        best, best_d = -1, -1.0
        for i in range(len(positions)):
            if i in chosen:
                continue
            d = min(_sq(positions[i], positions[j]) for j in chosen)
            if d > best_d:
                best, best_d = i, d
        chosen.append(best)
    return chosen


def brute_knn(queries: np.ndarray, positions: np.ndarray, k: int) -> list[list[int]]:
    return [[j for _, j in sorted((_sq(q, p), j) for j, p in enumerate(positions))[:k]] for q in queries]


def brute_ball_query(centers: np.ndarray, positions: np.ndarray, radius: float, cap: int) -> list[list[int]]:
    out = []
    for c in centers:
        hits = [j for j, p in enumerate(positions) if _sq(c, p) <= radius * radius][:cap]
        if not hits:
            hits = [min(range(len(positions)), key=lambda j: (_sq(c, positions[j]), j))]
        out.append(hits + [hits[0]] * (cap - len(hits)))
    return out


def monte_carlo_iou(a: Box3D, b: Box3D, n: int, rng: np.random.Generator) -> float:
    """Sample the joint bounding volume uniformly and count membership."""
    ca, cb = a.corners_bev(), b.corners_bev()
    lo = np.minimum(ca.min(axis=0), cb.min(axis=0))
    hi = np.maximum(ca.max(axis=0), cb.max(axis=0))
    zlo = min(a.z - a.h / 2, b.z - b.h / 2)
    zhi = max(a.z + a.h / 2, b.z + b.h / 2)
    pts = rng.uniform([lo[0], lo[1], zlo], [hi[0], hi[1], zhi], size=(n, 3))

    def inside(box):
        d = pts - box.center
        c, s = math.cos(box.theta), math.sin(box.theta)
        u = c * d[:, 0] + s * d[:, 1]
        v = -s * d[:, 0] + c * d[:, 1]
        return (np.abs(u) <= box.l / 2) & (np.abs(v) <= box.w / 2) & (np.abs(d[:, 2]) <= box.h / 2)

    ia, ib = inside(a), inside(b)
    union = np.count_nonzero(ia | ib)
    return np.count_nonzero(ia & ib) / union if union else 0.0


def random_box_pair(rng: np.random.Generator) -> tuple[Box3D, Box3D]:
    a = Box3D(*rng.uniform(-1, 1, 3), *rng.uniform(0.5, 3.0, 3), rng.uniform(-math.pi, math.pi))
    b = Box3D(*(a.center + rng.uniform(-1.5, 1.5, 3)), *rng.uniform(0.5, 3.0, 3), rng.uniform(-math.pi, math.pi))
    return a, b


def ideal_heads(box: Box3D, geom: GridGeometry, radius: float = 2.0) -> HeadOutputs:
    """Render labels as perfect network outputs (regression written everywhere it is read)."""
    lab = construct_labels(box, geom, radius)
    return HeadOutputs(Tensor(lab.bev_cls), Tensor(lab.bev_reg), Tensor(lab.z_cls), Tensor(lab.z_reg))


def random_box_in_region(rng: np.random.Generator, geom: GridGeometry) -> Box3D:
    lo, hi = geom.mins, geom.maxs
    c = rng.uniform(lo + 1e-6, hi - 1e-6)
    return Box3D(*c, *rng.uniform(0.5, 3.0, 3), rng.uniform(-math.pi, math.pi))


def oracle_point_ops(clouds: int, seed: int = 0, max_points: int = 512) -> CheckResult:
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(clouds):
        n = int(rng.integers(8, max_points + 1))
        pos = rng.uniform(-2, 2, size=(n, 3))
        # a sprinkle of duplicated coordinates exercises the tie rules
        dup = rng.integers(0, n, size=max(1, n // 20))
        pos[dup] = pos[rng.integers(0, n, size=dup.size)]
        m = min(n, int(rng.integers(1, 17)))
        start = int(rng.integers(n))
        q = pos[rng.integers(0, n, size=4)] + rng.normal(scale=0.1, size=(4, 3))
        k = min(n, 8)
        mismatches += list(fps(pos, m, start)) != brute_fps(pos, m, start)
        mismatches += knn(q, pos, k).tolist() != brute_knn(q, pos, k)
        mismatches += ball_query(q, pos, 0.5, 6).tolist() != brute_ball_query(q, pos, 0.5, 6)
    return CheckResult(f"oracle.fps_knn_ball_query[{clouds} clouds]", mismatches, 0, mismatches == 0)


def oracle_iou(pairs: int, samples: int, seed: int = 0, tol: float = 0.01) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        a, b = random_box_pair(rng)
        worst = max(worst, abs(iou3d(a, b) - monte_carlo_iou(a, b, samples, rng)))
    return CheckResult(f"oracle.iou3d_monte_carlo[{pairs} pairs]", worst, tol, worst < tol)


def oracle_label_roundtrip(boxes: int, cfg: RunConfig | None = None, seed: int = 0) -> CheckResult:
    from .config import default_config

    cfg = cfg or default_config()
    geom = GridGeometry.from_config(cfg.voxel)
    rng = np.random.default_rng(seed)
    half = np.asarray(geom.voxel_size) / 2
    bad = 0
    worst = 0.0
    for _ in range(boxes):
        box = random_box_in_region(rng, geom)
        ref_sized = Box3D(0, 0, 0, box.w, box.l, box.h, 0)
        got = decode_box(ideal_heads(box, geom, cfg.loss.label_radius), geom, ref_sized)
        err = np.abs(got.center - box.center)
        worst = max(worst, float((err / half).max()))
        bad += bool(np.any(err > half)) or got.theta != box.theta
    return CheckResult(f"oracle.label_decode_roundtrip[{boxes} boxes]", worst, 1.0, bad == 0, "max error in half-voxels")


def check_grid_dims(cfg: RunConfig | None = None) -> CheckResult:
    from .config import default_config

    geom = GridGeometry.from_config((cfg or default_config()).voxel)
    dims = (geom.W, geom.L, geom.H)
    return CheckResult("grid.dims", 0.0 if dims == (38, 25, 17) else 1.0, 0.0, dims == (38, 25, 17), f"(W,L,H)={dims}")


PUBLISHED_TABLE = [
    ("Car", 73.6, 84.1, 6424),
    ("Pedestrian", 74.3, 94.5, 308),
    ("Van", 58.7, 66.5, 1248),
    ("Cyclist", 55.6, 82.4, 6088),
]
PUBLISHED_MEAN = (64.5, 82.0)


def check_aggregation() -> CheckResult:
    rep = aggregate([CategoryResult(n, s, p, f) for n, s, p, f in PUBLISHED_TABLE])
    err = max(abs(rep.mean_success - PUBLISHED_MEAN[0]), abs(rep.mean_precision - PUBLISHED_MEAN[1]))
    return CheckResult("aggregate.published_means", err, 0.1, err <= 0.1, f"{rep.mean_success:.3f}/{rep.mean_precision:.3f}")


def check_checkpoint_roundtrip(seed: int = 0) -> CheckResult:
    cfg = toy_config()
    model = PyramidTracker(cfg, seed=seed)
    state = model.state_dict()
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "m.ckpt"
        nx.save_checkpoint(path, state, cfg.digest())
        back, digest = nx.load_checkpoint(path)
    same = digest == cfg.digest() and set(back) == set(state) and all(np.array_equal(back[k], state[k]) for k in state)
    return CheckResult("checkpoint.roundtrip", 0.0 if same else 1.0, 0.0, same)


def overfit_check(
    cfg: RunConfig,
    sequence: str = "synthetic:clutter_points=0,speed=0",
    steps: int = 50,
    batch: int = 8,
    lr: float = 3e-3,
    seed: int = 0,
    time_limit: float = 600.0,
) -> list[CheckResult]:
    """Train on one synthetic sequence, then track that same sequence.

    Reports the final/initial loss ratio (must fall below 0.2), Success
    and Precision of the resulting track (each must exceed 90) and the
    wall-clock time of training plus tracking against ``time_limit``.
    """
    from .dataio import SynthSpec, synth_sequence
    from .evalkit import ope_metrics
    from .tracker import track_sequence
    from .training import Trainer

    seq = synth_sequence(SynthSpec.parse(sequence))
    t0 = time.perf_counter()
    model = PyramidTracker(cfg, seed=seed)
    trainer = Trainer(model, [seq], seed=seed, lr=lr)
    history = trainer.fit(steps, batch)
    result = track_sequence(model, seq.frames, seq.boxes[0])
    elapsed = time.perf_counter() - t0
    success, precision = ope_metrics(result.boxes, seq.boxes)
    ratio = history[-1]["total"] / history[0]["total"]
    losses = f"{history[0]['total']:.3f} -> {history[-1]['total']:.3f}"
    return [
        CheckResult("overfit.loss_ratio", ratio, 0.2, ratio < 0.2, losses),
        CheckResult("overfit.success", success, 90.0, success > 90.0, "must exceed"),
        CheckResult("overfit.precision", precision, 90.0, precision > 90.0, "must exceed"),
        CheckResult("overfit.seconds", elapsed, time_limit, elapsed < time_limit),
    ]


def selftest(quick: bool = True, seed: int = 0) -> list[CheckResult]:
    """Every oracle at reduced sizes (``quick``) or at full acceptance sizes."""
    clouds, pairs, samples, boxes = (20, 20, 200_000, 200) if quick else (200, 100, 1_000_000, 1000)
    return [
        check_grid_dims(),
        oracle_point_ops(clouds, seed, max_points=128 if quick else 512),
        oracle_iou(pairs, samples, seed),
        oracle_label_roundtrip(boxes, seed=seed),
        check_aggregation(),
        check_checkpoint_roundtrip(seed),
    ]


def timed(fn: Callable[[], list[CheckResult]]) -> tuple[list[CheckResult], float]:
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


__all__ = [
    "CheckResult",
    "brute_ball_query",
    "brute_fps",
    "brute_knn",
    "gradcheck_suite",
    "ideal_heads",
    "monte_carlo_iou",
    "overfit_check",
    "oracle_iou",
    "oracle_label_roundtrip",
    "oracle_point_ops",
    "selftest",
]
