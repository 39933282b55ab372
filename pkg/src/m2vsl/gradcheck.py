"""Central finite-difference verification of every differentiable path.

Each case is a scalar function of named wide-float arrays. The analytic
gradient from :func:`tensor.backward` is compared elementwise with
``(f(x + h) - f(x - h)) / 2h``. Elements whose perturbation changes any
max-pool winner (or that start within ``tie_eps`` of a tie) are skipped and
counted, since the function is not differentiable there.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .config import RunConfig
from .contrastive import BatchPack, ContrastiveConfig, loss_a2v, loss_mc, loss_mmc, loss_v2a
from .errors import UsageError
from .mmt import MMTConfig, build_tokens, category_logits, init_mmt_params, mmt_stack
from .tensor import Value

STEP = 1e-5
TOLERANCE = 1e-4
TIE_EPS = 1e-6
SUITES = ("tensor_ops", "losses", "mmt_stack", "full_graph")

CaseFn = Callable[[dict[str, Value]], Value]


@dataclass
class CaseResult:
    name: str
    max_rel_err: float
    checked: int
    skipped: int


@dataclass
class SuiteResult:
    name: str
    cases: list[CaseResult] = field(default_factory=list)
    seconds: float = 0.0
    tolerance: float = TOLERANCE

    @property
    def max_rel_err(self) -> float:
        return max((c.max_rel_err for c in self.cases), default=0.0)

    @property
    def passed(self) -> bool:
        return bool(self.cases) and self.max_rel_err <= self.tolerance

    def failing(self) -> list[str]:
        return [c.name for c in self.cases if c.max_rel_err > self.tolerance]


@dataclass
class GradcheckReport:
    suites: list[SuiteResult]

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)

    def to_dict(self) -> dict:
        out: dict = {"passed": self.passed}
        for s in self.suites:
            out[f"{s.name}.max_rel_err"] = s.max_rel_err
            out[f"{s.name}.passed"] = s.passed
            out[f"{s.name}.cases"] = len(s.cases)
            out[f"{s.name}.skipped"] = sum(c.skipped for c in s.cases)
        return out

    def lines(self) -> list[str]:
        rows = []
        for s in self.suites:
            status = "PASS" if s.passed else "FAIL"
            extra = f" failing={','.join(s.failing())}" if s.failing() else ""
            rows.append(f"{status} {s.name}: cases={len(s.cases)} max_rel_err={s.max_rel_err:.3e} "
                        f"({s.seconds:.1f}s){extra}")
        return rows


def _max_signature(root: Value) -> tuple[list[np.ndarray], float]:
    """Winners of every max node reachable from ``root`` and the smallest top-2 gap."""
    sig, gap = [], np.inf
    for node in T._topological(root):
        if not node.op.startswith("max:"):
            continue
        axis = int(node.op.split(":")[1])
        x = node.parents[0].data
        sig.append(np.argmax(x, axis=axis))
        if x.shape[axis] > 1:
            top2 = -np.partition(-x, 1, axis=axis).take([0, 1], axis=axis)
            gap = min(gap, float(np.min(top2.take(0, axis=axis) - top2.take(1, axis=axis))))
    return sig, gap


def _same(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def check_case(name: str, fn: CaseFn, inputs: dict[str, np.ndarray], h: float = STEP,
               tie_eps: float = TIE_EPS) -> CaseResult:
    arrays = {k: np.array(v, dtype=T.WIDE) for k, v in inputs.items()}
    leaves = {k: Value(v.copy(), name=k) for k, v in arrays.items()}
    root = fn(leaves)
    if root.data.size != 1:
        raise UsageError(f"case {name} does not return a scalar")
    base_sig, gap = _max_signature(root)
    T.backward(root)
    worst, checked, skipped = 0.0, 0, 0

    def evaluate(key: str, flat: int, delta: float):
        vals = {k: Value(v, name=k) for k, v in arrays.items()}
        x = vals[key].data.copy()
        x.reshape(-1)[flat] += delta
        vals[key] = Value(x, name=key)
        out = fn(vals)
        return float(out.data), _max_signature(out)[0]

    for key, arr in arrays.items():
        analytic = leaves[key].grad.reshape(-1)
        for flat in range(arr.size):
            fp, sp = evaluate(key, flat, h)
            fm, sm = evaluate(key, flat, -h)
            if gap < tie_eps or not (_same(sp, base_sig) and _same(sm, base_sig)):
                skipped += 1
                continue
            numeric = (fp - fm) / (2 * h)
            a = analytic[flat]
            worst = max(worst, abs(a - numeric) / (abs(a) + 1e-8))
            checked += 1
    return CaseResult(name, float(worst), checked, skipped)


# ----------------------------------------------------------------- suites

def tensor_op_cases(rng: np.random.Generator) -> list[tuple[str, CaseFn, dict]]:
    def proj(f):
        w_rng = np.random.default_rng(rng.integers(2**32))
        state: dict = {}

        def g(v):
            y = f(v)
            if "w" not in state:
                state["w"] = w_rng.standard_normal(y.shape)
            return T.sum(T.mul(y, state["w"]))
        return g

    x = lambda *s: rng.standard_normal(s)  # noqa: E731
    pos = lambda *s: rng.uniform(0.5, 2.0, s)  # noqa: E731
    cases = [
        ("add", lambda v: T.add(v["a"], v["b"]), {"a": x(3, 4), "b": x(4)}),
        ("sub", lambda v: T.sub(v["a"], v["b"]), {"a": x(3, 1), "b": x(3, 4)}),
        ("mul", lambda v: T.mul(v["a"], v["b"]), {"a": x(2, 3), "b": x(2, 3)}),
        ("div", lambda v: T.div(v["a"], v["b"]), {"a": x(2, 3), "b": pos(3)}),
        ("exp", lambda v: T.exp(v["a"]), {"a": x(5)}),
        ("log", lambda v: T.log(v["a"]), {"a": pos(5)}),
        ("tanh", lambda v: T.tanh(v["a"]), {"a": x(5)}),
        ("sigmoid", lambda v: T.sigmoid(v["a"]), {"a": x(5)}),
        ("reshape", lambda v: T.reshape(v["a"], (3, 2)), {"a": x(2, 3)}),
        ("transpose", lambda v: T.transpose(v["a"], (2, 0, 1)), {"a": x(2, 3, 2)}),
        ("take", lambda v: T.take(v["a"], (np.array([0, 1, 1]), np.array([2, 0, 2]))), {"a": x(2, 3)}),
        ("concat", lambda v: T.concat([v["a"], v["b"]], axis=1), {"a": x(2, 2), "b": x(2, 3)}),
        ("split", lambda v: T.mul(*T.split(v["a"], [2, 2], axis=1)), {"a": x(3, 4)}),
        ("sum", lambda v: T.sum(v["a"], axis=0), {"a": x(3, 4)}),
        ("mean", lambda v: T.mean(v["a"], axis=(0, 2)), {"a": x(2, 3, 2)}),
        ("max_along", lambda v: T.max_along(v["a"], 1)[0], {"a": x(3, 5)}),
        ("max_over_locations", lambda v: T.max_over_locations(v["a"])[0], {"a": x(3, 3)}),
        ("logsumexp", lambda v: T.logsumexp(v["a"], axis=0), {"a": x(4, 3)}),
        ("softmax", lambda v: T.softmax(v["a"], axis=-1), {"a": x(3, 4)}),
        ("matmul", lambda v: T.matmul(v["a"], v["b"]), {"a": x(3, 4), "b": x(4, 2)}),
        ("matmul_batched", lambda v: T.matmul(v["a"], v["b"]), {"a": x(2, 3, 4), "b": x(4, 2)}),
        ("l2_normalize", lambda v: T.l2_normalize(v["a"], -1), {"a": x(3, 4)}),
        ("cosine_similarity", lambda v: T.cosine_similarity(v["a"], v["b"]), {"a": x(3, 4), "b": x(3, 4)}),
    ]
    out = [(n, proj(f), i) for n, f, i in cases]
    targets = (rng.random((2, 3)) > 0.5).astype(float)
    out.append(("bce_with_logits", lambda v: T.bce_with_logits(v["a"], targets), {"a": x(2, 3)}))
    return out


def loss_cases(rng: np.random.Generator) -> list[tuple[str, CaseFn, dict]]:
    b, d = 3, 5
    shapes = [(b, 4, 4, d), (b, 2, 2, d), (b, 1, 1, d)]
    inputs = {"audio": rng.standard_normal((b, d))}
    inputs.update({f"v{s}": rng.standard_normal(shp) for s, shp in enumerate(shapes)})
    cfg = ContrastiveConfig(tau=0.2)

    def pack(v):
        return BatchPack(v["audio"], [v[f"v{s}"] for s in range(len(shapes))])

    return [
        ("loss_mc", lambda v: loss_mc(v["audio"], v["v0"], cfg), {k: inputs[k] for k in ("audio", "v0")}),
        ("loss_a2v", lambda v: loss_a2v(pack(v), cfg), inputs),
        ("loss_v2a", lambda v: loss_v2a(pack(v), cfg), inputs),
        ("loss_mmc", lambda v: loss_mmc(pack(v), cfg), inputs),
    ]


def mmt_cases(rng: np.random.Generator) -> list[tuple[str, CaseFn, dict]]:
    b, h, w, d, c = 2, 2, 2, 4, 3
    cases = []
    for proj, res in ((False, False), (True, True)):
        mcfg = MMTConfig(dim=d, n_categories=c, depth=3, projections=proj, residual=res)
        params = {k: v.data for k, v in init_mmt_params(mcfg, rng).items()}
        inputs = {"patches": rng.standard_normal((b, h, w, d)), "audio": rng.standard_normal((b, d)),
                  **params}
        labels = (rng.random((b, c)) > 0.5).astype(float)

        def fn(v, mcfg=mcfg, labels=labels):
            seq = build_tokens(v["patches"], v["audio"], v, np.array([1.0, 0.0]))
            out = mmt_stack(seq, h * w, v, mcfg)
            return T.bce_with_logits(category_logits(out, v), labels)

        cases.append((f"mmt_depth3{'_proj_res' if proj else ''}", fn, inputs))
    return cases


def full_graph_cases(rng: np.random.Generator) -> list[tuple[str, CaseFn, dict]]:
    """Encoders -> multi-scale contrastive + attention head -> classification, w.r.t. every parameter."""
    from .model import Model

    cfg = RunConfig(dim=4, n_scales=2, n_categories=3, image_size=8, patch=2, batch_size=3,
                    tau=0.2, seed=int(rng.integers(1000)))
    n_bins = 6
    model = Model(cfg, n_bins=n_bins)
    images = rng.random((3, 8, 8, 3))
    specs = rng.standard_normal((3, n_bins, 5))
    labels = np.eye(3)
    keep = np.array([1.0, 0.0, 1.0])
    inputs = {k: v.data.copy() for k, v in model.params.items()}

    def fn(v):
        model.params = v
        fwd = model.forward(images, specs, keep)
        return model.loss(fwd, labels)[0]

    return [("mmc_mmt_classification", fn, inputs)]


_BUILDERS = {"tensor_ops": tensor_op_cases, "losses": loss_cases, "mmt_stack": mmt_cases,
             "full_graph": full_graph_cases}


def run_suite(name: str, seed: int = 0, tolerance: float = TOLERANCE) -> SuiteResult:
    if name not in _BUILDERS:
        raise UsageError(f"unknown gradcheck suite {name!r}; choose from {SUITES}")
    t0 = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence([seed, SUITES.index(name)]))
    result = SuiteResult(name, tolerance=tolerance)
    for case_name, fn, inputs in _BUILDERS[name](rng):
        result.cases.append(check_case(case_name, fn, inputs))
    result.seconds = time.perf_counter() - t0
    return result


def gradcheck(cfg: RunConfig | None = None, suites=SUITES, tolerance: float = TOLERANCE) -> GradcheckReport:
    seed = 0 if cfg is None else cfg.seed
    return GradcheckReport([run_suite(s, seed, tolerance) for s in suites])
