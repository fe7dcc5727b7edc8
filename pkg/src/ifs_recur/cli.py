"""Configuration-driven experiment runner.

Every experiment writes a results.json containing the format version, the
fully resolved configuration, and the results; reruns with the same config
and seed produce byte-identical files (wall-clock metadata goes to a
sidecar).  Optional artifacts (CSV tables, PGM masks) and matplotlib
figures are written next to the results file.

Exit codes: 0 success, 2 configuration error, 3 budget error, 4 internal
consistency failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import garsia_algebra
from .covering_sep import (
    count_overlap_pairs,
    dilate_covers,
    exact_max_separated,
    greedy_disjoint_cover,
    max_separated_subset,
    rectangle_family,
)
from .dimension_calc import (
    DichotomyInput,
    DimensionInput,
    dim_lower_bound,
    garsia_hausdorff_criterion,
)
from .errors import BudgetError, ConfigError, ConsistencyError
from .ifs_core import (
    AffineIFS,
    SymbolicSequence,
    lambda_value,
    operator_norm,
)
from .measure_lab import (
    Ball,
    Box,
    HFamily,
    LinearImageBall,
    TargetMode,
    TargetSpec,
    borel_cantelli_report,
    bonferroni_bound,
    detect_exact_overlaps,
    exact_overlap_gamma,
    kochen_stone_bound,
    mask_to_pgm,
    mask_to_runs,
    overlap_is_exact,
    pairwise_intersection_table,
    product_ifs_criterion,
    stage_mask,
    union_of_masks,
    window,
)
from .transversality_mc import (
    DEFAULT_S_GRID,
    mc_scaling,
    recurrence_union_statistic,
    sample_translations,
    union_measure_statistic,
)

FORMAT_VERSION = "1"

EXPERIMENT_KINDS = (
    "lambda", "garsia-check", "garsia-sep", "stage-measure",
    "recurrence-measure", "bounds", "cover", "separated",
    "mc-transversality", "mc-recurrence", "dim", "garsia-criterion",
    "exact-overlap", "product-criterion",
)


# -- deterministic JSON with 17 significant digits ---------------------------


def _normalize(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return [_normalize(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    return obj


def _format_json(obj: Any, indent: int = 0) -> str:
    pad = "  " * indent
    child = "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return "null"
        return f"{obj:.17g}"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        rows = [f"{child}{json.dumps(str(k))}: {_format_json(v, indent + 1)}"
                for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(rows) + f"\n{pad}}}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        rows = [f"{child}{_format_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(rows) + f"\n{pad}]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_results(payload: dict) -> str:
    return _format_json(_normalize(payload)) + "\n"


# -- config plumbing ---------------------------------------------------------


SCHEMAS: dict[str, set[str]] = {
    "lambda": {"ifs"},
    "garsia-check": {"poly", "coeffs"},
    "garsia-sep": {"lambda", "poly", "n_min", "n_max"},
    "stage-measure": {"ifs", "h", "center", "n", "n_min", "n_max", "window",
                      "resolution", "word_budget"},
    "recurrence-measure": {"ifs", "h", "n", "n_min", "n_max", "window",
                           "resolution", "word_budget"},
    "bounds": {"ifs", "mode", "h", "levels", "overlap_word", "word_budget"},
    "cover": {"rectangles", "rectangles_csv"},
    "separated": {"points", "points_csv", "shape", "s", "exact_max"},
    "mc-transversality": {"diag", "m", "tail", "n", "R", "s_grid", "samples",
                          "seed", "mode", "statistic", "resolution", "threads"},
    "mc-recurrence": {"diag", "m", "matrices", "n", "R", "s_grid", "samples",
                      "seed", "resolution", "threads"},
    "dim": {"lambdas", "lambda_a", "s"},
    "garsia-criterion": {"s", "h"},
    "exact-overlap": {"ifs", "max_len", "tol"},
    "product-criterion": {"sizes", "ratios"},
}


def resolve_config(kind: str, config_path: str | None,
                   overrides: dict[str, Any]) -> dict[str, Any]:
    """Merge config file and CLI overrides under strict key checking."""
    config: dict[str, Any] = {}
    if config_path is not None:
        try:
            with open(config_path) as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {config_path} is not valid JSON: {exc}") \
                from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        config.update(loaded)
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    allowed = SCHEMAS[kind]
    unknown = set(config) - allowed
    if unknown:
        raise ConfigError(
            f"unknown config keys for {kind}: {sorted(unknown)}; "
            f"allowed: {sorted(allowed)}")
    return config


def validate_config_keys(kind: str, config: dict[str, Any]) -> bool:
    """Re-validation hook: True iff every key is in the kind's schema."""
    return set(config) <= SCHEMAS[kind]


def _load_ifs(config: dict, strict: bool = False) -> AffineIFS:
    payload = config.get("ifs")
    if payload is None:
        raise ConfigError("an 'ifs' entry (path or inline object) is required")
    if isinstance(payload, str):
        try:
            with open(payload) as fh:
                payload = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read IFS file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"IFS file is not valid JSON: {exc}") from exc
    try:
        return AffineIFS.from_dict(payload, strict=strict)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid IFS description: {exc}") from exc


def _parse_sequence(payload) -> SymbolicSequence:
    if isinstance(payload, dict):
        return SymbolicSequence(tuple(payload.get("preperiod", ())),
                                tuple(payload["period"]))
    raise ConfigError(
        "symbol sequences are objects {\"preperiod\": [...], \"period\": [...]} ")


def _parse_center(payload, d: int):
    if payload is None:
        return np.zeros(d)
    if isinstance(payload, dict):
        return _parse_sequence(payload)
    return np.asarray([float(v) for v in payload])


def _parse_h(config: dict) -> HFamily:
    payload = config.get("h")
    if payload is None:
        raise ConfigError("an 'h' entry like const:1 or power:1,1 is required")
    if isinstance(payload, str):
        try:
            return HFamily.parse(payload)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if isinstance(payload, list):
        return HFamily.custom(payload)
    raise ConfigError("'h' must be a string form or a list of values")


def _parse_window(payload) -> Any:
    if payload is None:
        return None
    try:
        return window(payload["lo"], payload["hi"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid window: {exc}") from exc


def _parse_shape(payload):
    if not isinstance(payload, dict) or "kind" not in payload:
        raise ConfigError("shape must be an object with a 'kind' field")
    kind = payload["kind"]
    try:
        if kind == "ball":
            return Ball(float(payload["radius"]))
        if kind == "box":
            return Box(np.asarray([float(v) for v in payload["halfwidths"]]))
        if kind == "linear-ball":
            return LinearImageBall(np.asarray(payload["matrix"], dtype=float),
                                   float(payload["radius"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid shape: {exc}") from exc
    raise ConfigError(f"unknown shape kind {kind!r}")


def _levels_from_config(config: dict) -> list[int]:
    if config.get("n") is not None:
        return [int(config["n"])]
    lo = config.get("n_min")
    hi = config.get("n_max")
    if lo is None or hi is None:
        raise ConfigError("provide either 'n' or both 'n_min' and 'n_max'")
    lo, hi = int(lo), int(hi)
    if lo < 1 or hi < lo:
        raise ConfigError("need 1 <= n_min <= n_max")
    return list(range(lo, hi + 1))


def _float_list(text) -> list[float]:
    if isinstance(text, str):
        return [float(v) for v in text.split(",") if v]
    return [float(v) for v in text]


def _int_list(text) -> list[int]:
    if isinstance(text, str):
        return [int(v) for v in text.split(",") if v]
    return [int(v) for v in text]


def _diag_matrices(config: dict) -> list[np.ndarray]:
    if config.get("matrices") is not None:
        return [np.asarray(a, dtype=float) for a in config["matrices"]]
    diag = config.get("diag")
    m = config.get("m")
    if diag is None or m is None:
        raise ConfigError("provide 'diag' (diagonal entries) and 'm', "
                          "or an explicit 'matrices' list")
    entries = _float_list(diag)
    return [np.diag(entries) for _ in range(int(m))]


def _read_points(config: dict) -> np.ndarray:
    if config.get("points") is not None:
        return np.asarray(config["points"], dtype=float)
    path = config.get("points_csv")
    if path is None:
        raise ConfigError("provide 'points' inline or 'points_csv'")
    try:
        rows = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read points: {exc}") from exc
    return rows


# -- experiment handlers ------------------------------------------------------


class Outputs:
    """Collects artifact/figure writers keyed by suffix."""

    def __init__(self, base: Path, artifacts: bool, figures: bool):
        self.base = base
        self.artifacts_enabled = artifacts
        self.figures_enabled = figures
        self.written: list[str] = []

    def artifact_path(self, suffix: str) -> Path | None:
        if not self.artifacts_enabled:
            return None
        path = self.base.with_name(self.base.stem + "_" + suffix)
        self.written.append(str(path))
        return path

    def figure_path(self, suffix: str) -> Path | None:
        if not self.figures_enabled:
            return None
        path = self.base.with_name(self.base.stem + "_" + suffix + ".png")
        self.written.append(str(path))
        return path


def run_lambda(config: dict, out: Outputs) -> dict:
    ifs = _load_ifs(config)
    value = lambda_value(ifs)
    print(f"{value:.17g}")
    return {"lambda": value, "d": ifs.dimension, "m": ifs.alphabet_size,
            "norms": [operator_norm(s.matrix) for s in ifs.maps]}


def run_garsia_check(config: dict, out: Outputs) -> dict:
    if config.get("poly") is not None:
        poly = garsia_algebra.parse_polynomial(str(config["poly"]))
    elif config.get("coeffs") is not None:
        poly = garsia_algebra.poly_from_list(config["coeffs"])
    else:
        raise ConfigError("provide 'poly' (string) or 'coeffs' (list)")
    try:
        report = garsia_algebra.is_garsia(poly)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(report.verdict.value)
    return report.to_dict()


def run_garsia_sep(config: dict, out: Outputs) -> dict:
    if config.get("lambda") is not None:
        lam = float(config["lambda"])
    elif config.get("poly") is not None:
        poly = garsia_algebra.parse_polynomial(str(config["poly"]))
        try:
            lam = garsia_algebra.garsia_lambda(poly)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        raise ConfigError("provide 'lambda' or a Garsia 'poly'")
    n_min = int(config.get("n_min", 1))
    n_max = int(config.get("n_max", 14))
    if not 1 <= n_min <= n_max:
        raise ConfigError("need 1 <= n_min <= n_max")
    rows = []
    for n in range(n_min, n_max + 1):
        sep = garsia_algebra.separation_min(lam, n)
        rows.append({"n": n, "separation": sep, "scaled": sep * 2 ** n,
                     "periodic": sep / (1.0 - lam ** n)})
    scaled = [r["scaled"] for r in rows]
    results = {"lambda": lam, "rows": rows,
               "scaled_min": min(scaled), "scaled_max": max(scaled),
               "scaled_ratio": max(scaled) / min(scaled) if min(scaled) > 0
               else None}
    if (path := out.artifact_path("separation.csv")) is not None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "separation", "scaled", "periodic"])
            for r in rows:
                writer.writerow([r["n"], f"{r['separation']:.17g}",
                                 f"{r['scaled']:.17g}", f"{r['periodic']:.17g}"])
    if (path := out.figure_path("separation")) is not None:
        from . import plots
        plots.separation_figure([r["n"] for r in rows], scaled, str(path))
    return results


def _auto_window(ifs: AffineIFS, spec: TargetSpec, levels: Sequence[int],
                 budget: int | None):
    from .measure_lab import stage_bodies, stage_intervals
    los, his = [], []
    for n in levels:
        if ifs.dimension == 1:
            lo_arr, hi_arr = stage_intervals(ifs, spec, n, budget)
            los.append(np.array([lo_arr.min()]))
            his.append(np.array([hi_arr.max()]))
        else:
            bodies = stage_bodies(ifs, spec, n, budget)
            los.append(np.min([b.center - b.bounding_halfwidths()
                               for b in bodies], axis=0))
            his.append(np.max([b.center + b.bounding_halfwidths()
                               for b in bodies], axis=0))
    lo = np.min(np.stack(los), axis=0)  # (levels, d) -> per-axis minima
    hi = np.max(np.stack(his), axis=0)
    pad = np.maximum((hi - lo) * 0.02, 1e-9)
    return window(lo - pad, hi + pad)


def _run_measure(config: dict, out: Outputs, recurrence: bool) -> dict:
    ifs = _load_ifs(config)
    h = _parse_h(config)
    if recurrence:
        spec = TargetSpec(TargetMode.RECURRENCE, h=h)
    else:
        center = _parse_center(config.get("center"), ifs.dimension)
        spec = TargetSpec(TargetMode.SHRINKING_BALL, h=h, center=center)
    levels = _levels_from_config(config)
    resolution = config.get("resolution", 4096)
    if isinstance(resolution, str):
        resolution = _int_list(resolution)
        resolution = resolution[0] if len(resolution) == 1 else tuple(resolution)
    budget = config.get("word_budget")
    win = _parse_window(config.get("window"))
    if win is None:
        win = _auto_window(ifs, spec, levels, budget)

    masks = []
    level_rows = []
    for n in levels:
        mask, boundary = stage_mask(ifs, spec, n, win, resolution, budget)
        masks.append(mask)
        level_rows.append({
            "level": n,
            "bodies": ifs.alphabet_size ** n,
            "union_measure": mask.measure(),
            "boundary_error": boundary * mask.cell_volume,
        })
        if ifs.dimension == 2 and (path := out.artifact_path(f"level{n}.pgm")):
            path.write_bytes(mask_to_pgm(mask))
        if ifs.dimension == 1 and (path := out.artifact_path(f"level{n}_runs.csv")):
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["start", "length"])
                writer.writerows(mask_to_runs(mask))

    table = pairwise_intersection_table(masks)
    union_all = union_of_masks(masks).measure()
    results = {
        "mode": spec.mode.value,
        "h": h.describe(),
        "h_membership": h.membership.value,
        "window": {"lo": win.lo.tolist(), "hi": win.hi.tolist()},
        "resolution": list(masks[0].resolution),
        "levels": level_rows,
        "bounds": {
            "kochen_stone": kochen_stone_bound(table) if table.sum() > 0 else None,
            "bonferroni": bonferroni_bound(table),
        },
        "union_across_levels": union_all,
    }
    if (path := out.figure_path("levels")) is not None:
        from . import plots
        plots.level_measure_figure(levels,
                                   [r["union_measure"] for r in level_rows],
                                   str(path))
    if (path := out.figure_path("mask")) is not None:
        from . import plots
        plots.mask_figure(masks[-1], str(path))
    return results


def run_stage_measure(config: dict, out: Outputs) -> dict:
    return _run_measure(config, out, recurrence=False)


def run_recurrence_measure(config: dict, out: Outputs) -> dict:
    return _run_measure(config, out, recurrence=True)


def run_bounds(config: dict, out: Outputs) -> dict:
    ifs = _load_ifs(config)
    h = _parse_h(config)
    mode = config.get("mode", "shrinking")
    if mode == "shrinking":
        spec = TargetSpec(TargetMode.SHRINKING_BALL, h=h,
                          center=np.zeros(ifs.dimension))
    elif mode == "recurrence":
        spec = TargetSpec(TargetMode.RECURRENCE, h=h)
    else:
        raise ConfigError("mode must be 'shrinking' or 'recurrence'")
    levels = int(config.get("levels", 20))
    overlap = config.get("overlap_word")
    overlap_word = tuple(int(v) for v in overlap) if overlap is not None else None
    report = borel_cantelli_report(ifs, spec, levels,
                                   overlap_word=overlap_word,
                                   budget=config.get("word_budget"))
    if (path := out.figure_path("partial_sums")) is not None:
        from . import plots
        plots.partial_sums_figure(report, str(path))
    print(report.hint.value)
    return report.to_dict()


def run_cover(config: dict, out: Outputs) -> dict:
    if config.get("rectangles") is not None:
        rows = config["rectangles"]
        centers = [r["center"] for r in rows]
        halfwidths = [r["halfwidths"] for r in rows]
    elif config.get("rectangles_csv") is not None:
        try:
            data = np.loadtxt(config["rectangles_csv"], delimiter=",", ndmin=2)
        except OSError as exc:
            raise ConfigError(f"cannot read rectangles: {exc}") from exc
        d = data.shape[1] // 2
        centers, halfwidths = data[:, :d], data[:, d:]
    else:
        raise ConfigError("provide 'rectangles' inline or 'rectangles_csv'")
    try:
        family = rectangle_family(centers, halfwidths)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    selected = greedy_disjoint_cover(family)
    return {
        "count": len(family),
        "selected": selected,
        "selected_count": len(selected),
        "dilate_covers": dilate_covers(family, selected),
    }


def run_separated(config: dict, out: Outputs) -> dict:
    points = _read_points(config)
    shape = _parse_shape(config.get("shape") or
                         {"kind": "ball", "radius": 1.0})
    s = config.get("s")
    if s is None:
        raise ConfigError("the scale 's' is required")
    s = float(s)
    selected = max_separated_subset(points, shape, s)
    results = {
        "selected": selected,
        "selected_count": len(selected),
        "overlap_pairs": count_overlap_pairs(points, shape, s),
    }
    if config.get("exact_max") and points.shape[0] <= 20:
        results["exact_max"] = exact_max_separated(points, shape, s)
    return results


def run_mc_transversality(config: dict, out: Outputs) -> dict:
    matrices = _diag_matrices(config)
    tail = _parse_sequence(config.get("tail") or {"period": [0]})
    n = int(config.get("n", 6))
    box_radius = float(config.get("R", 1.0))
    s_grid = [float(v) for v in config.get("s_grid", DEFAULT_S_GRID)]
    samples = int(config.get("samples", 200))
    seed = int(config.get("seed", 0))
    statistic = config.get("statistic", "pairs")
    threads = int(config.get("threads", 0))

    if statistic == "pairs":
        report = mc_scaling(matrices, tail, n, box_radius, s_grid, samples,
                            seed, mode=config.get("mode", "target"),
                            threads=threads)
        if (path := out.artifact_path("scaling.csv")) is not None:
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["s", "sample_index", "statistic"])
                for gi, s in enumerate(report.s_grid):
                    for k in range(report.samples):
                        writer.writerow([f"{s:.17g}", k,
                                         int(report.counts[gi, k])])
        if (path := out.figure_path("scaling")) is not None:
            from . import plots
            plots.scaling_figure(report, str(path))
        print(f"slope {report.slope:.6g} (ambient d = {report.d})")
        return report.to_dict()

    if statistic == "union":
        draws = sample_translations(len(matrices), matrices[0].shape[0],
                                    box_radius, samples, seed)
        resolution = int(config.get("resolution", 4096))
        grid_stats = []
        for s in s_grid:
            values = []
            for sample in draws:
                stat = union_measure_statistic(matrices, sample, tail, n, s,
                                               resolution=resolution)
                values.append(stat.value)
            arr = np.array(values)
            grid_stats.append({
                "s": s,
                "mean": float(arr.mean()),
                "stderr": float(arr.std(ddof=1) / np.sqrt(samples))
                if samples > 1 else 0.0,
                "hard_bound": s ** matrices[0].shape[0],
                "max_value": float(arr.max()),
            })
        return {"statistic": "union", "n": n, "R": box_radius, "seed": seed,
                "samples": samples, "grid": grid_stats}

    raise ConfigError("statistic must be 'pairs' or 'union'")


def run_mc_recurrence(config: dict, out: Outputs) -> dict:
    matrices = _diag_matrices(config)
    n = int(config.get("n", 5))
    box_radius = float(config.get("R", 1.0))
    s_grid = [float(v) for v in config.get("s_grid", DEFAULT_S_GRID)]
    samples = int(config.get("samples", 100))
    seed = int(config.get("seed", 0))
    resolution = int(config.get("resolution", 4096))
    draws = sample_translations(len(matrices), matrices[0].shape[0],
                                box_radius, samples, seed)
    grid_stats = []
    for s in s_grid:
        values, bound = [], None
        for sample in draws:
            stat = recurrence_union_statistic(matrices, sample, n, s,
                                              resolution=resolution)
            values.append(stat.value)
            bound = stat.hard_bound
        arr = np.array(values)
        grid_stats.append({
            "s": s,
            "mean": float(arr.mean()),
            "stderr": float(arr.std(ddof=1) / np.sqrt(samples))
            if samples > 1 else 0.0,
            "hard_bound": bound,
            "max_value": float(arr.max()),
        })
    return {"n": n, "R": box_radius, "seed": seed, "samples": samples,
            "grid": grid_stats}


def run_dim(config: dict, out: Outputs) -> dict:
    if config.get("lambdas") is None or config.get("lambda_a") is None or \
            config.get("s") is None:
        raise ConfigError("dim needs 'lambdas', 'lambda_a', and 's'")
    try:
        inp = DimensionInput(tuple(_float_list(config["lambdas"])),
                             float(config["lambda_a"]), float(config["s"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    result = dim_lower_bound(inp)
    print(f"{result.value:.17g}")
    return result.to_dict()


def run_garsia_criterion(config: dict, out: Outputs) -> dict:
    if config.get("s") is None:
        raise ConfigError("the exponent 's' is required")
    h = _parse_h(config)
    try:
        inp = DichotomyInput(float(config["s"]), h)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    verdict = garsia_hausdorff_criterion(inp)
    print(verdict.value)
    return {"s": inp.s, "h": h.describe(), "verdict": verdict.value}


def run_exact_overlap(config: dict, out: Outputs) -> dict:
    ifs = _load_ifs(config)
    max_len = int(config.get("max_len", 3))
    tol = float(config.get("tol", 1e-9))
    pairs = detect_exact_overlaps(ifs, max_len, tol=tol)
    rows = []
    for u, v in pairs:
        rows.append({
            "u": list(u),
            "v": list(v),
            "gamma": exact_overlap_gamma(ifs, u),
            "exact": overlap_is_exact(ifs, u, v),
        })
    return {"max_len": max_len, "tol": tol, "count": len(rows), "pairs": rows}


def run_product_criterion(config: dict, out: Outputs) -> dict:
    if config.get("sizes") is None or config.get("ratios") is None:
        raise ConfigError("product-criterion needs 'sizes' and 'ratios'")
    try:
        value = product_ifs_criterion(_int_list(config["sizes"]),
                                      _float_list(config["ratios"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"{value:.17g}")
    return {"value": value, "zero_measure_certified": value < 1.0}


HANDLERS: dict[str, Callable[[dict, Outputs], dict]] = {
    "lambda": run_lambda,
    "garsia-check": run_garsia_check,
    "garsia-sep": run_garsia_sep,
    "stage-measure": run_stage_measure,
    "recurrence-measure": run_recurrence_measure,
    "bounds": run_bounds,
    "cover": run_cover,
    "separated": run_separated,
    "mc-transversality": run_mc_transversality,
    "mc-recurrence": run_mc_recurrence,
    "dim": run_dim,
    "garsia-criterion": run_garsia_criterion,
    "exact-overlap": run_exact_overlap,
    "product-criterion": run_product_criterion,
}


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ifs-recur",
        description="Shrinking-target and recurrence experiments for "
                    "overlapping affine iterated function systems. "
                    "Experiment kinds: " + ", ".join(EXPERIMENT_KINDS) + ".")
    subs = parser.add_subparsers(dest="kind", required=True,
                                 metavar="{" + ",".join(EXPERIMENT_KINDS) + "}")

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override keys")
        p.add_argument("--out", default="results.json",
                       help="results path (default results.json)")
        p.add_argument("--figures", action="store_true",
                       help="render matplotlib figures next to the results")
        p.add_argument("--artifacts", action="store_true",
                       help="write CSV/PGM artifacts next to the results")
        p.add_argument("--threads", type=int, default=None,
                       help="worker cap for parallel sections "
                            "(0 = auto; env IFS_RECUR_THREADS as fallback)")

    specs: dict[str, list[tuple[str, dict]]] = {
        "lambda": [("--ifs", {})],
        "garsia-check": [("--poly", {})],
        "garsia-sep": [("--poly", {}), ("--lambda", {"dest": "lambda", "type": float}),
                       ("--n-min", {"dest": "n_min", "type": int}),
                       ("--n-max", {"dest": "n_max", "type": int})],
        "stage-measure": [("--ifs", {}), ("--h", {}),
                          ("--n", {"type": int}),
                          ("--n-min", {"dest": "n_min", "type": int}),
                          ("--n-max", {"dest": "n_max", "type": int}),
                          ("--resolution", {})],
        "recurrence-measure": [("--ifs", {}), ("--h", {}),
                               ("--n", {"type": int}),
                               ("--n-min", {"dest": "n_min", "type": int}),
                               ("--n-max", {"dest": "n_max", "type": int}),
                               ("--resolution", {})],
        "bounds": [("--ifs", {}), ("--h", {}), ("--mode", {}),
                   ("--levels", {"type": int}),
                   ("--overlap-word", {"dest": "overlap_word"})],
        "cover": [("--rectangles-csv", {"dest": "rectangles_csv"})],
        "separated": [("--points-csv", {"dest": "points_csv"}),
                      ("--s", {"type": float})],
        "mc-transversality": [("--diag", {}), ("--m", {"type": int}),
                              ("--n", {"type": int}),
                              ("--r", {"dest": "R", "type": float}),
                              ("--samples", {"type": int}),
                              ("--seed", {"type": int}),
                              ("--statistic", {}),
                              ("--mode", {}),
                              ("--resolution", {"type": int})],
        "mc-recurrence": [("--diag", {}), ("--m", {"type": int}),
                          ("--n", {"type": int}),
                          ("--r", {"dest": "R", "type": float}),
                          ("--samples", {"type": int}),
                          ("--seed", {"type": int}),
                          ("--resolution", {"type": int})],
        "dim": [("--lambdas", {}), ("--lambda-a", {"dest": "lambda_a",
                                                   "type": float}),
                ("--s", {"type": float})],
        "garsia-criterion": [("--s", {"type": float}), ("--h", {})],
        "exact-overlap": [("--ifs", {}), ("--max-len", {"dest": "max_len",
                                                        "type": int})],
        "product-criterion": [("--sizes", {}), ("--ratios", {})],
    }
    for kind in EXPERIMENT_KINDS:
        sub = subs.add_parser(kind, help=f"run the {kind} experiment")
        for flag, kwargs in specs.get(kind, []):
            sub.add_argument(flag, **kwargs)
        add_common(sub)
    return parser


_COMMON_ARGS = {"kind", "config", "out", "figures", "artifacts", "threads"}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    kind = args.kind
    out_path = Path(args.out)
    outputs = Outputs(out_path, args.artifacts, args.figures)

    overrides = {k: v for k, v in vars(args).items() if k not in _COMMON_ARGS}
    if "threads" in SCHEMAS[kind]:
        if args.threads is not None:
            overrides["threads"] = args.threads
        elif os.environ.get("IFS_RECUR_THREADS"):
            overrides["threads"] = int(os.environ["IFS_RECUR_THREADS"])
    if "overlap_word" in overrides and isinstance(overrides["overlap_word"], str):
        overrides["overlap_word"] = _int_list(overrides["overlap_word"])

    def write_payload(payload: dict) -> None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(dumps_results(payload))
        meta = {"written_at": datetime.datetime.now(datetime.timezone.utc)
                .isoformat()}
        out_path.with_suffix(".meta.json").write_text(
            json.dumps(meta, indent=2) + "\n")

    try:
        config = resolve_config(kind, args.config, overrides)
        results = HANDLERS[kind](config, outputs)
        payload = {
            "format_version": FORMAT_VERSION,
            "experiment": kind,
            "config": config,
            "results": results,
        }
        if outputs.written:
            payload["outputs"] = sorted(outputs.written)
        write_payload(payload)
        return 0
    except ConfigError as exc:
        write_payload({"format_version": FORMAT_VERSION, "experiment": kind,
                       "error": {"code": 2, "type": "config",
                                 "reason": str(exc)}})
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BudgetError as exc:
        write_payload({"format_version": FORMAT_VERSION, "experiment": kind,
                       "error": {"code": 3, "type": "budget",
                                 "reason": str(exc)}})
        print(f"budget error: {exc}", file=sys.stderr)
        return 3
    except ConsistencyError as exc:
        write_payload({"format_version": FORMAT_VERSION, "experiment": kind,
                       "error": {"code": 4, "type": "consistency",
                                 "reason": str(exc)}})
        print(f"internal consistency failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
