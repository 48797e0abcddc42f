"""Building protocols from configs, sweeps over parameter grids, and report emission."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .attacks import check_budget, greedy_packing, poisoning_experiment, reconstruction_experiment
from .baselines import additive_shares_protocol, identity_protocol
from .config import ExperimentConfig, to_record
from .multi_message import make_multi_params, multi_message_protocol, multi_vector_protocol, split_budget
from .protocol import ProtocolPair
from .runtime import ShufflerTopology, child_seed, estimate_err, make_inputs, root_seed, run_protocol
from .single_message import InfeasibleParams, SingleMsgParams, select_params, single_message_protocol
from .transforms import coord_symmetrize, lift_dimension, rotate_symmetrize
from .vecspace import make_frame

FORMAT_VERSION = 1
CSV_COLUMNS = (
    "protocol", "n", "d", "eps", "delta", "trials", "mse_mean", "mse_ci95",
    "messages_per_user", "seconds", "error",
)


def single_params(cfg: ExperimentConfig, d: int) -> SingleMsgParams:
    if cfg.gamma is not None:
        return SingleMsgParams.from_gamma(cfg.r or 4, cfg.gamma, cfg.n, d, cfg.eps, cfg.delta)
    return select_params(cfg.eps, cfg.delta, cfg.n, d, cfg.r)


def base_protocol(cfg: ExperimentConfig, d: int) -> ProtocolPair:
    if cfg.protocol == "single":
        return single_message_protocol(single_params(cfg, d))
    if cfg.protocol in ("multi", "multi-vector"):
        params = make_multi_params(
            cfg.eps, cfg.delta, cfg.n, d, level=cfg.level, frame_seed=cfg.frame_seed,
            precision_bits=cfg.precision_bits, shares=cfg.shares,
        )
        return multi_message_protocol(params) if cfg.protocol == "multi" else multi_vector_protocol(params)
    if cfg.protocol == "shares":
        return additive_shares_protocol(d, cfg.k, sigma=cfg.sigma)
    if cfg.protocol == "identity":
        return identity_protocol(d)
    raise ValueError(f"unknown protocol {cfg.protocol!r}")


def build_protocol(cfg: ExperimentConfig) -> ProtocolPair:
    """The configured base protocol wrapped by the combinators in order.

    With ``lift`` the base and the combinators before it act in dimension 2d;
    the lifted protocol and everything after it act in dimension d.
    """
    lifted = "lift" in cfg.combinators
    protocol = base_protocol(cfg, 2 * cfg.d if lifted else cfg.d)
    for name in cfg.combinators:
        if name == "rotate":
            protocol = rotate_symmetrize(protocol)
        elif name == "coord":
            protocol = coord_symmetrize(protocol)
        elif name == "lift":
            protocol = lift_dimension(protocol, cfg.d, make_frame(cfg.d, cfg.level, cfg.frame_seed))
    return protocol


def protocol_label(cfg: ExperimentConfig) -> str:
    return "+".join((cfg.protocol,) + tuple(cfg.combinators))


def grid(cfg: ExperimentConfig) -> list[ExperimentConfig]:
    """Cartesian product of the sweep axes, in the order the axes were declared."""
    if not cfg.sweep:
        return [cfg.point()]
    keys = list(cfg.sweep)
    return [cfg.point(**dict(zip(keys, values))) for values in itertools.product(*(cfg.sweep[k] for k in keys))]


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


@dataclass
class SweepRow:
    protocol: str
    n: int
    d: int
    eps: float
    delta: float
    trials: int
    mse_mean: float
    mse_ci95: float
    messages_per_user: int
    seconds: float
    error: str = ""

    def cells(self) -> list[str]:
        return [
            self.protocol, str(self.n), str(self.d), _fmt(self.eps), _fmt(self.delta), str(self.trials),
            _fmt(self.mse_mean), _fmt(self.mse_ci95), str(self.messages_per_user),
            f"{self.seconds:.3f}", self.error,
        ]


def run_point(cfg: ExperimentConfig, seed, threads: int = 1) -> SweepRow:
    start = time.perf_counter()
    nan = math.nan
    try:
        protocol = build_protocol(cfg)
        est = estimate_err(protocol, cfg.input_family, cfg.n, cfg.d, cfg.trials, seed, threads=threads)
        row = (est.mse_mean, est.mse_ci95, protocol.k, "")
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        row = (nan, nan, 0, f"{type(exc).__name__}: {exc}".replace("\n", " "))
    return SweepRow(protocol_label(cfg), cfg.n, cfg.d, cfg.eps, cfg.delta, cfg.trials,
                    row[0], row[1], row[2], time.perf_counter() - start, row[3])


def run_sweep(cfg: ExperimentConfig, *, threads: int = 1) -> list[SweepRow]:
    """One row per grid point; point i is seeded from (seed, i) so threads never change results."""
    points = grid(cfg)
    root = root_seed(cfg.seed)
    jobs = [(p, child_seed(root, i)) for i, p in enumerate(points)]
    if threads <= 1:
        return [run_point(p, s) for p, s in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: run_point(*job), jobs))


def timestamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def sweep_csv(rows: list[SweepRow], generated: str | None = None) -> str:
    """CSV text: a versioned comment line carrying the timestamp, then header and rows."""
    buf = io.StringIO()
    buf.write(f"# shuffle-agg sweep format_version={FORMAT_VERSION} generated={generated or timestamp()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.cells())
    return buf.getvalue()


def read_sweep_csv(text: str) -> list[dict]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# shuffle-agg sweep"):
        raise ValueError("missing shuffle-agg sweep header line")
    return list(csv.DictReader(lines[1:]))


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def json_report(body: dict, seconds: float) -> str:
    """Deterministic body plus a ``meta`` entry holding the wall-clock fields."""
    record = dict(body)
    record["meta"] = {"generated": timestamp(), "seconds": round(seconds, 3), "format_version": FORMAT_VERSION}
    return json.dumps(record, sort_keys=True, indent=2) + "\n"


def params_table(eps: float, delta: float, n: int, d: int) -> tuple[str, bool]:
    """Parameter table for both protocols; the flag is False if single-message is infeasible."""
    lines = [f"# eps={eps} delta={delta} n={n} d={d}", "[single-message]"]
    feasible = True
    try:
        p = select_params(eps, delta, n, d)
        lines += [
            f"r = {p.r}", f"c = {p.c:.6g}", f"gamma = {p.gamma:.6g}",
            f"k_buckets = {(p.r + 1) ** d}", f"mse_bound = {4 * p.mse_bound():.6g}", "feasible = true",
        ]
    except InfeasibleParams as exc:
        feasible = False
        lines += ["feasible = false", f"reason = {exc}"]
    lines.append("[multi-message]")
    eps0, delta0 = split_budget(eps, delta, d)
    params = make_multi_params(eps, delta, n, d)
    e = params.engine
    lines += [
        f"eps0 = {eps0:.6g}", f"delta0 = {delta0:.6g}", f"g = {e.shares}", f"p = {e.precision_bits}",
        f"q = 2^{e.modulus.bit_length() - 1}", f"messages_per_user = {params.k}", "feasible = true",
    ]
    return "\n".join(lines) + "\n", feasible


def attack_report(cfg: ExperimentConfig) -> dict:
    """Run the configured attack; budget violations raise before any work is done."""
    rng = np.random.default_rng(root_seed(cfg.seed))
    a = cfg.attack
    if a.kind == "reconstruction":
        protocol = build_protocol(cfg)
        check_budget(cfg.n * protocol.k, protocol.k, a.budget)
        packing = greedy_packing(cfg.d, a.rho, a.packing_seed)
        report = reconstruction_experiment(
            protocol, packing, cfg.n, protocol.k, cfg.trials, rng,
            method=a.method, mc_samples=a.mc_samples, budget=a.budget,
        )
        return {"kind": a.kind, "protocol": protocol_label(cfg), "packing_size": len(packing), **report.to_dict()}
    if cfg.protocol not in ("multi", "multi-vector") or cfg.combinators:
        raise ValueError("poisoning runs against the plain multi-message protocol")
    params = make_multi_params(cfg.eps, cfg.delta, cfg.n, cfg.d, level=cfg.level, frame_seed=cfg.frame_seed,
                               precision_bits=cfg.precision_bits, shares=cfg.shares)
    report = poisoning_experiment(
        multi_vector_protocol(params), cfg.n, cfg.trials, rng,
        alpha=a.alpha, probe_budget=a.probe_budget,
        family=cfg.input_family if cfg.input_family != "sup" else "basis",
    )
    return {"kind": a.kind, "protocol": "multi-vector", **report.to_dict()}


def run_report(cfg: ExperimentConfig, threads: int = 1) -> dict:
    """Error estimate at one config point plus one run through the configured topology."""
    protocol = build_protocol(cfg)
    root = root_seed(cfg.seed)
    est = estimate_err(protocol, cfg.input_family, cfg.n, cfg.d, cfg.trials, child_seed(root, 0), threads=threads)
    rng = np.random.default_rng(child_seed(root, 1))
    V = make_inputs("iid-uniform", cfg.n, cfg.d, rng)
    topo = ShufflerTopology(cfg.topology.mode, cfg.topology.rate_limit)
    result = run_protocol(V, protocol, topo, rng)
    return {
        "protocol": protocol_label(cfg),
        "config": to_record(cfg),
        "estimate": {"mse_mean": est.mse_mean, "mse_ci95": est.mse_ci95, "trials": est.trials,
                     "input_family": est.input_family},
        "messages_per_user": protocol.k,
        "single_run": {"squared_error": float(np.sum((result.output - V.sum(axis=0)) ** 2)),
                       "dropped": result.report.total_dropped},
    }
