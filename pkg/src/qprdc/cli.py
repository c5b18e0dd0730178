"""Command-line front end: ``qprdc {quantize,price,convergence,mc-check,dump-tree}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import kernels
from .closed_form import DegenerateModelError, european_prdc
from .gaussian import EmptyCellError
from .mc import mc_european
from .model import InitialCurve, ModelError, ModelParams
from .payoff import ProductError, ProductSpec, product_from_dict
from .pricer import price_bermudan
from .quantizer import QuantizerConvergenceError, grid_path, save_grid, std_grid
from .tree import GridSizes, McConfig, Mode, TreeError, allocate_sizes, build_tree, dump_tree

log = logging.getLogger("qprdc")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
DEFAULT_NOTIONAL = 100.0


class ConfigError(ValueError):
    pass


NUMERIC_ERRORS = (QuantizerConvergenceError, EmptyCellError, DegenerateModelError,
                  FloatingPointError, np.linalg.LinAlgError, MemoryError, ArithmeticError)
CONFIG_ERRORS = (ConfigError, ModelError, ProductError, TreeError, KeyError, TypeError,
                 ValueError, OSError)


# -- configuration ----------------------------------------------------------------

def _curve_from(value, base: Path) -> InitialCurve:
    if isinstance(value, (int, float)):
        return InitialCurve.flat(float(value))
    if isinstance(value, str):
        return InitialCurve.from_csv(base / value)
    if isinstance(value, dict):
        if "rate" in value:
            return InitialCurve.flat(float(value["rate"]))
        if "csv" in value:
            return InitialCurve.from_csv(base / value["csv"])
        return InitialCurve(tenors=tuple(map(float, value["tenors"])),
                            discounts=tuple(map(float, value["discounts"])))
    raise ConfigError(f"cannot read a discount curve from {value!r}")


def model_from_dict(d: dict, base: Path = Path(".")) -> ModelParams:
    try:
        return ModelParams(
            s0=float(d["s0"]),
            sigma_s=float(d["sigma_s"]),
            sigma_d=float(d["sigma_d"]),
            sigma_f=float(d["sigma_f"]),
            rho_sd=float(d.get("rho_sd", 0.0)),
            rho_sf=float(d.get("rho_sf", 0.0)),
            rho_df=float(d.get("rho_df", 0.0)),
            curve_d=_curve_from(d.get("curve_d", 0.0), base),
            curve_f=_curve_from(d.get("curve_f", 0.0), base),
        )
    except KeyError as exc:
        raise ConfigError(f"model config is missing field {exc}") from None


def model_to_dict(p: ModelParams) -> dict:
    return {
        "s0": p.s0, "sigma_s": p.sigma_s, "sigma_d": p.sigma_d, "sigma_f": p.sigma_f,
        "rho_sd": p.rho_sd, "rho_sf": p.rho_sf, "rho_df": p.rho_df,
        "curve_d": p.curve_d.to_dict(), "curve_f": p.curve_f.to_dict(),
    }


@dataclass(frozen=True)
class EngineConfig:
    mode: str = "2d"
    n_total: int = 32000
    levels: Optional[tuple[int, ...]] = None
    mc_samples: Optional[int] = None
    seed: int = 0
    exercise_at_t0: bool = False
    cell_average: bool = False

    def sizes(self) -> GridSizes:
        if self.levels is not None:
            return GridSizes(Mode(self.mode), tuple(self.levels), self.n_total)
        return allocate_sizes(self.n_total, self.mode)


@dataclass(frozen=True)
class OutputConfig:
    csv: Optional[str] = None
    retain_layers: bool = False
    notional: float = DEFAULT_NOTIONAL


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    product: ProductSpec
    engine: EngineConfig = field(default_factory=EngineConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self) -> None:
        if self.engine.mode not in ("2d", "4d"):
            raise ConfigError(f"unknown mode {self.engine.mode!r} (expected 2d or 4d)")
        if self.engine.n_total < 1:
            raise ConfigError("N must be >= 1")
        if self.engine.mc_samples is not None and self.engine.mc_samples < 1:
            raise ConfigError("mc_samples must be >= 1")
        if (self.engine.mode == "4d" and not self.model.blocks_independent
                and self.engine.mc_samples is None):
            raise ConfigError("4d mode with nonzero rho_sd or rho_df needs --mc-samples "
                              "for Monte-Carlo transitions")
        if not self.output.notional > 0:
            raise ConfigError("notional must be positive")

    def to_dict(self) -> dict:
        eng = {
            "mode": self.engine.mode, "N": self.engine.n_total, "seed": self.engine.seed,
            "mc_samples": self.engine.mc_samples, "exercise_at_t0": self.engine.exercise_at_t0,
            "cell_average": self.engine.cell_average,
        }
        if self.engine.levels is not None:
            eng["levels"] = list(self.engine.levels)
        return {
            "model": model_to_dict(self.model),
            "product": self.product.to_dict(),
            "engine": eng,
            "output": {"csv": self.output.csv, "retain_layers": self.output.retain_layers,
                       "notional": self.output.notional},
        }


def config_from_dict(d: dict, base: Path = Path(".")) -> RunConfig:
    if not isinstance(d, dict) or "model" not in d or "product" not in d:
        raise ConfigError("config needs 'model' and 'product' sections")
    model_d = d["model"]
    if isinstance(model_d, str):
        model_d = json.loads((base / model_d).read_text())
    prod_d = d["product"]
    if isinstance(prod_d, str):
        prod_d = json.loads((base / prod_d).read_text())
    e = d.get("engine", {})
    o = d.get("output", {})
    levels = e.get("levels")
    engine = EngineConfig(
        mode=str(e.get("mode", "2d")).lower(),
        n_total=int(e.get("N", 32000)),
        levels=tuple(int(n) for n in levels) if levels is not None else None,
        mc_samples=None if e.get("mc_samples") is None else int(e["mc_samples"]),
        seed=int(e.get("seed", 0)),
        exercise_at_t0=bool(e.get("exercise_at_t0", False)),
        cell_average=bool(e.get("cell_average", False)),
    )
    output = OutputConfig(
        csv=o.get("csv"),
        retain_layers=bool(o.get("retain_layers", False)),
        notional=float(o.get("notional", DEFAULT_NOTIONAL)),
    )
    cfg = RunConfig(model_from_dict(model_d, base), product_from_dict(prod_d), engine, output)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return config_from_dict(raw, path.parent)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    eng, out = cfg.engine, cfg.output
    if getattr(args, "mode", None):
        eng = replace(eng, mode=args.mode)
    if getattr(args, "N", None) is not None:
        eng = replace(eng, n_total=args.N, levels=None)
    if getattr(args, "mc_samples", None) is not None:
        eng = replace(eng, mc_samples=args.mc_samples)
    if getattr(args, "seed", None) is not None:
        eng = replace(eng, seed=args.seed)
    if getattr(args, "exercise_at_t0", False):
        eng = replace(eng, exercise_at_t0=True)
    if getattr(args, "notional", None) is not None:
        out = replace(out, notional=args.notional)
    if getattr(args, "out", None) is not None:
        out = replace(out, csv=args.out)
    cfg = replace(cfg, engine=eng, output=out)
    cfg.validate()
    return cfg


# -- commands --------------------------------------------------------------------

def _emit_csv(header: list[str], rows: list[list], path: Optional[str]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    text = buf.getvalue()
    sys.stdout.write(text)
    if path:
        Path(path).write_text(text)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _run_price(cfg: RunConfig, cache_dir=None):
    sizes = cfg.engine.sizes()
    mc = McConfig(cfg.engine.mc_samples, cfg.engine.seed) if cfg.engine.mc_samples else None
    start = time.perf_counter()
    tree = build_tree(cfg.model, cfg.product, sizes, mc=mc, cell_average=cfg.engine.cell_average,
                      cache_dir=cache_dir)
    res = price_bermudan(tree, cfg.model, cfg.product, retain=cfg.output.retain_layers,
                         exercise_at_t0=cfg.engine.exercise_at_t0)
    res.meta["wall_ms"] = 1e3 * (time.perf_counter() - start)
    return tree, res


def cmd_price(cfg: RunConfig, *, timings: bool = True, cache_dir=None) -> int:
    tree, res = _run_price(cfg, cache_dir)
    header = ["v0", "mode", "N_requested", "N_realized", "levels", "n_dates"]
    row = [_fmt(cfg.output.notional * res.v0), tree.mode.value, cfg.engine.n_total,
           tree.sizes.total, "x".join(map(str, tree.sizes.levels)), cfg.product.n_dates]
    if timings:
        header += ["grid_ms", "transition_ms", "induction_ms"]
        row += [f"{res.meta['grid_ms']:.3f}", f"{res.meta['transition_ms']:.3f}",
                f"{res.meta['induction_ms']:.3f}"]
    _emit_csv(header, [row], cfg.output.csv)
    return 0


def _reference(cfg: RunConfig) -> Optional[float]:
    if cfg.product.n_dates == 1 and cfg.product.payoff is None:
        return european_prdc(cfg.model, cfg.product)
    return None


def cmd_convergence(cfg: RunConfig, n_list: list[int], *, timings: bool = True,
                    cache_dir=None) -> int:
    if not n_list:
        raise ConfigError("--N-list must name at least one size")
    runs = []
    for n in n_list:
        c = replace(cfg, engine=replace(cfg.engine, n_total=n, levels=None))
        tree, res = _run_price(c, cache_dir)
        runs.append((n, tree.sizes.total, res.v0, res.meta["wall_ms"]))
    ref = _reference(cfg)
    if ref is None:  # Bermudan: largest-N run of the same mode
        ref = max(runs, key=lambda r: r[1])[2]
    header = ["N", "N_realized", "v0", "rel_error_vs_reference"] + (["wall_ms"] if timings else [])
    rows = []
    for n, real, v0, ms in runs:
        row = [n, real, _fmt(cfg.output.notional * v0), f"{abs(v0 / ref - 1.0):.6e}"]
        if timings:
            row.append(f"{ms:.3f}")
        rows.append(row)
    _emit_csv(header, rows, cfg.output.csv)
    return 0


def cmd_mc_check(cfg: RunConfig, n_paths: int, seed: int) -> int:
    single = cfg.product.single_date(cfg.product.n_dates)
    est = mc_european(cfg.model, single, n_paths, seed)
    ref = european_prdc(cfg.model, single)
    scale = cfg.output.notional
    header = ["maturity", "mc_value", "mc_stderr", "closed_form", "z_score", "within_4_stderr"]
    row = [_fmt(float(single.exercise_dates[0])), _fmt(scale * est.value), _fmt(scale * est.stderr),
           _fmt(scale * ref), f"{est.z_score(ref):.3f}", str(est.agrees(ref)).lower()]
    _emit_csv(header, [row], cfg.output.csv)
    return 0 if est.agrees(ref) else 1


def cmd_quantize(n: int, cache_dir: Optional[str], out: Optional[str]) -> int:
    if n < 1:
        raise ConfigError("N must be >= 1")
    grid = std_grid(n, cache=False)
    path = Path(out) if out else grid_path(n, cache_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_grid(grid, path)
    print(f"N={n} distortion={grid.distortion:.12g} N*sqrt(distortion)={n * math.sqrt(grid.distortion):.12g}")
    print(f"wrote {path}")
    return 0


def cmd_dump_tree(cfg: RunConfig, out_dir: str, cache_dir=None) -> int:
    sizes = cfg.engine.sizes()
    mc = McConfig(cfg.engine.mc_samples, cfg.engine.seed) if cfg.engine.mc_samples else None
    tree = build_tree(cfg.model, cfg.product, sizes, mc=mc, cell_average=cfg.engine.cell_average,
                      cache_dir=cache_dir)
    for path in dump_tree(tree, out_dir):
        print(path)
    return 0


# -- entry point -----------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="worker cap for compiled kernels")
    common.add_argument("--cache-dir", default=None, help="grid cache directory (overrides QPRDC_CACHE_DIR)")
    common.add_argument("--out", default=None, help="output CSV path (directory for dump-tree)")
    common.add_argument("-v", "--verbose", action="store_true")

    run = argparse.ArgumentParser(add_help=False, parents=[common])
    run.add_argument("--config", required=True, help="run configuration JSON")
    run.add_argument("--mode", choices=["2d", "4d"], default=None)
    run.add_argument("--N", type=int, default=None, help="node budget per date")
    run.add_argument("--mc-samples", type=int, default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--notional", type=float, default=None,
                     help=f"scale of reported prices (default {DEFAULT_NOTIONAL:g})")
    run.add_argument("--exercise-at-t0", action="store_true", help="allow exercise at the valuation date")
    run.add_argument("--no-timings", action="store_true", help="omit wall-clock columns")
    run.add_argument("--echo-config", action="store_true", help="print the effective config to stderr")

    ap = argparse.ArgumentParser(prog="qprdc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    q = sub.add_parser("quantize", parents=[common], help="build and cache a standard-normal grid")
    q.add_argument("--N", type=int, required=True)
    sub.add_parser("price", parents=[run], help="price the configured product")
    c = sub.add_parser("convergence", parents=[run], help="price over a list of node budgets")
    c.add_argument("--N-list", required=True, help="comma-separated node budgets")
    sub.add_parser("mc-check", parents=[run], help="Monte-Carlo check of the last-date European price")
    sub.add_parser("dump-tree", parents=[run], help="write tree layers and transitions as CSV")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        kernels.set_threads(args.threads)
    try:
        if args.command == "quantize":
            return cmd_quantize(args.N, args.cache_dir, args.out)
        cfg = _apply_overrides(load_config(args.config), args)
        if args.echo_config:
            print(json.dumps(cfg.to_dict(), indent=2), file=sys.stderr)
        timings = not args.no_timings
        if args.command == "price":
            return cmd_price(cfg, timings=timings, cache_dir=args.cache_dir)
        if args.command == "convergence":
            try:
                n_list = [int(s) for s in args.N_list.split(",") if s.strip()]
            except ValueError:
                raise ConfigError(f"bad --N-list {args.N_list!r}") from None
            return cmd_convergence(cfg, n_list, timings=timings, cache_dir=args.cache_dir)
        if args.command == "mc-check":
            n = cfg.engine.mc_samples or 1_000_000
            return cmd_mc_check(cfg, n, cfg.engine.seed)
        if args.command == "dump-tree":
            if not args.out:
                raise ConfigError("dump-tree needs --out <directory>")
            return cmd_dump_tree(cfg, args.out, args.cache_dir)
    except NUMERIC_ERRORS as exc:
        print(f"qprdc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CONFIG_ERRORS as exc:
        print(f"qprdc: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
