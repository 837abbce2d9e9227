"""Throughput comparison: structural bounds versus branch post-processing.

Two evaluation variants of the same trained network:

* layer: the ReLU constraint composition inside the forward pass (the
  shipped model).
* ifelse: the raw network followed by explicit conditional clamping, the
  conventional way to impose bounds after the fact.  Inference values agree
  with the layer variant except for a couple of ULP where no bound is
  active; training gradients do not agree, because post-processing is
  invisible to the graph (the branch variant backpropagates as if no bounds
  existed).

Both variants run in two shapes: column mode evaluates instance by instance
(the simulation access pattern) and grid mode evaluates one stacked batch
(the map-making pattern, optionally replicated to scale the batch).  Both
shapes run on each available backend.  Timings exclude compilation (paths
are warmed up first); the memory figure is the tracemalloc peak of one
evaluation divided by its instance count, which only sees Python-heap
allocations, so compiled-kernel internals do not show up in it.  No
parallelism is introduced by this module; numpy may still hand large matrix
products to a threaded BLAS, which is part of what grid mode measures.
"""

import time
import tracemalloc
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .backend import HAS_NUMBA
from .constraints import ConstrainedModel, snow_floor
from .errors import ConfigError

VARIANTS = ("layer", "ifelse")
MODES = ("column", "grid")


def _ifelse_numpy(model: ConstrainedModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, np.float64))
    p = model.predict_raw(X)
    closed = X[:, model.threshold.gate_index] <= 0.0
    p = np.where(closed & (p > 0.0), 0.0, p)
    floor = snow_floor(X[:, model.threshold.state_index], model.dt)
    return np.maximum(p, floor)


def build_ifelse_variant(model: ConstrainedModel, backend: str | None = None):
    """Callable evaluating the branch-clamped variant on raw feature rows.

    Uses the same directed floor as the layer variant so the two can be
    compared bitwise wherever a bound is active.
    """
    from .simulation import _resolve_backend, pack_net

    be = _resolve_backend(backend)
    if be == "numba":
        from .kernels import eval_batch

        w = pack_net(model)
        th = model.threshold

        def run(X):
            return eval_batch(np.ascontiguousarray(X, np.float64), *w,
                              model.scale_x, model.scale_y, model.dt,
                              th.state_index, th.gate_index, True)
        return run
    return lambda X: _ifelse_numpy(model, X)


def build_layer_variant(model: ConstrainedModel, backend: str | None = None):
    """Callable evaluating the constraint-layer model on raw feature rows."""
    from .simulation import _resolve_backend, pack_net

    be = _resolve_backend(backend)
    if be == "numba":
        from .kernels import eval_batch

        w = pack_net(model)
        th = model.threshold

        def run(X):
            return eval_batch(np.ascontiguousarray(X, np.float64), *w,
                              model.scale_x, model.scale_y, model.dt,
                              th.state_index, th.gate_index, False)
        return run
    return model.evaluate_batch


@dataclass
class BenchRow:
    variant: str
    mode: str
    backend: str
    replication: int
    instances: int
    runs: int
    mean_us: float       # microseconds per instance
    std_us: float
    kb_per_instance: float


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    parameter_count: int = 0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.__dict__ for r in self.rows])

    def table(self) -> str:
        """Compact text table: one block per mode, variants as columns."""
        df = self.to_frame()
        lines = [f"throughput per instance ({self.parameter_count} parameters)"]
        for mode in MODES:
            sub = df[df["mode"] == mode]
            if sub.empty:
                continue
            lines.append(f"\n[{mode}]")
            lines.append(f"{'variant':<10}{'backend':<9}{'rep':>5}"
                         f"{'us/inst':>12}{'std':>10}{'KB/inst':>10}")
            for _, r in sub.iterrows():
                lines.append(
                    f"{r.variant:<10}{r.backend:<9}{int(r.replication):>5}"
                    f"{r.mean_us:>12.4f}{r.std_us:>10.4f}"
                    f"{r.kb_per_instance:>10.3f}")
        return "\n".join(lines)


def _time_call(fn, arg, runs: int) -> tuple[float, float, np.ndarray]:
    samples = np.empty(runs)
    for i in range(runs):
        t0 = time.perf_counter()
        fn(arg)
        samples[i] = time.perf_counter() - t0
    return float(samples.mean()), float(samples.std()), samples


def _column_fn(model, variant: str, backend: str):
    from .simulation import pack_net

    if backend == "numba":
        from .kernels import column_checksum

        w = pack_net(model)
        th = model.threshold

        def run(X):
            return column_checksum(X, *w, model.scale_x, model.scale_y,
                                   model.dt, th.state_index, th.gate_index,
                                   variant == "ifelse")
        return run
    single = build_layer_variant(model, "numpy") if variant == "layer" else \
        build_ifelse_variant(model, "numpy")

    def run(X):
        acc = 0.0
        for r in range(X.shape[0]):
            acc += float(single(X[r:r + 1])[0])
        return acc
    return run


def bench(model: ConstrainedModel, X: np.ndarray,
          replications: tuple[int, ...] = (14, 141), grid_trials: int = 250,
          column_passes: int = 10,
          backends: tuple[str, ...] | None = None) -> BenchReport:
    """Measure both variants in both shapes on the given feature rows.

    Column mode sweeps X instance by instance column_passes times; grid mode
    stacks X replication-fold and evaluates the whole batch grid_trials
    times.  Returns per-instance microseconds (mean and std over runs) and
    the tracemalloc peak per instance of a single evaluation.
    """
    X = np.ascontiguousarray(np.atleast_2d(X), np.float64)
    if X.shape[0] < 1:
        raise ConfigError("need at least one instance to benchmark")
    if backends is None:
        backends = ("numba", "numpy") if HAS_NUMBA else ("numpy",)
    report = BenchReport(parameter_count=model.net.parameter_count)
    for backend in backends:
        for variant in VARIANTS:
            col = _column_fn(model, variant, backend)
            col(X[: min(64, X.shape[0])])  # warmup, includes compilation
            mean_s, std_s, _ = _time_call(col, X, column_passes)
            tracemalloc.start()
            col(X)
            _, peak = tracemalloc.get_traced_memory()
            tracemalloc.stop()
            n = X.shape[0]
            report.rows.append(BenchRow(
                variant=variant, mode="column", backend=backend, replication=1,
                instances=n, runs=column_passes,
                mean_us=mean_s / n * 1e6, std_us=std_s / n * 1e6,
                kb_per_instance=peak / n / 1024.0))
            batch_fn = build_layer_variant(model, backend) if variant == "layer" \
                else build_ifelse_variant(model, backend)
            for rep in replications:
                XB = np.ascontiguousarray(np.tile(X, (rep, 1)))
                batch_fn(XB[: min(256, XB.shape[0])])  # warmup
                mean_s, std_s, _ = _time_call(batch_fn, XB, grid_trials)
                tracemalloc.start()
                batch_fn(XB)
                _, peak = tracemalloc.get_traced_memory()
                tracemalloc.stop()
                nb = XB.shape[0]
                report.rows.append(BenchRow(
                    variant=variant, mode="grid", backend=backend,
                    replication=rep, instances=nb, runs=grid_trials,
                    mean_us=mean_s / nb * 1e6, std_us=std_s / nb * 1e6,
                    kb_per_instance=peak / nb / 1024.0))
    return report
