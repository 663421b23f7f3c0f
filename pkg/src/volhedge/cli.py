"""Config-driven batch pipeline over the library.

A YAML experiment config names market-data files, date segments, model
families, hedge strategies and simulation settings. Each pipeline command
reads the artifacts of its predecessors from the output directory and writes
its own, plus a manifest with content hashes of everything consumed and
produced:

    fit-surface  quotes            -> surfaces/<segment>.json
    calibrate    quotes            -> calibration/<segment>.json
    simulate     calibration, prices -> paths/<segment>_<simulator>.npz
    hedge        paths, calibration, surfaces -> pnl/*.csv + pnl/index.json
    backtest     prices, surfaces  -> backtest/<segment>.csv
    report       pnl, backtest     -> reports/*.json, *_plot.csv, summary.csv

Commands are deterministic: the same config and seed produce byte-identical
CSV artifacts. Invoked as ``python -m volhedge.cli --config c.yaml --command
hedge --out runs/x [--seed N] [--segment S] [--model M] [--strategy T]``.
Exit status is 0 on success, 1 on config or data validation errors, 2 on
numeric failures. Environment variables VOLHEDGE_QUOTES and VOLHEDGE_PRICES
override the data file paths (paths only; every other setting lives in the
config file).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import hashlib
import json
import logging
import os
import platform
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import scipy
import yaml

from . import __version__
from .analytics import (BACKTEST_EXPIRY_DAYS, build_report, relative_pnl,
                        run_backtest, write_plot_csv)
from .calibration import calibrate, default_calib_config
from .errors import (ConvergenceError, DegenerateInstrumentError, DomainError,
                     ExtrapolationError, FitError, GridError,
                     MissingArtifactError, NumericsError, PriceBoundsError,
                     SchemaError, VolhedgeError)
from .hedging import (STRATEGIES, HedgeSpec, PricingContext,
                      default_second_instrument, instrument_price,
                      run_hedge_experiment, write_pnl_csv)
from .models import (BsParams, CgmyParams, JdParams, ModelParams, SvcjParams,
                     SvjParams, SvParams, VgParams)
from .pricing import OptionSpec
from .scenarios import (DT_DAILY, KdeSampler, PathMatrix, fit_garch11,
                        log_returns, simulate_garch_kde, simulate_svcj)
from .vol_surface import (QuoteRow, SviSlice, SviSurface, fit_svi_surface,
                          interp_price)

__all__ = [
    "SegmentDef",
    "ExperimentConfig",
    "load_config",
    "load_quotes",
    "load_prices",
    "run",
    "main",
    "COMMANDS",
    "SIMULATORS",
]

logger = logging.getLogger(__name__)

COMMANDS = ("fit-surface", "calibrate", "simulate", "hedge", "backtest",
            "report")
SIMULATORS = ("svcj", "garch_kde")

_FAMILY_CLS = {
    "bs": BsParams, "jd": JdParams, "sv": SvParams, "svj": SvjParams,
    "svcj": SvcjParams, "vg": VgParams, "cgmy": CgmyParams,
}

_QUOTE_COLUMNS = ("date", "expiry", "strike", "type", "iv_mid", "volume",
                  "underlying")
_PRICE_COLUMNS = ("date", "close")

# exit-code classification; MissingArtifactError subclasses OSError so the
# validation tuple must be checked before any bare OSError handler
_VALIDATION_ERRORS = (DomainError, SchemaError, MissingArtifactError)
_NUMERIC_ERRORS = (NumericsError, ConvergenceError, FitError,
                   DegenerateInstrumentError, GridError, ExtrapolationError,
                   PriceBoundsError)

_CONFIG_KEYS = {
    "data", "segments", "models", "strategies", "maturities", "n_paths",
    "dt", "seed", "r", "rho_j", "expiry_days", "kde_h", "svi_starts",
    "calib_starts", "calib_max_iter",
}


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SegmentDef:
    name: str
    start: dt.date
    end: dt.date

    def __post_init__(self):
        if not self.name or not all(c.isalnum() or c in "_-" for c in self.name):
            raise DomainError(f"segment name {self.name!r} must be nonempty "
                              "and filename-safe (alphanumerics, _ and -)")
        if not self.start < self.end:
            raise DomainError(f"segment {self.name!r}: start {self.start} must "
                              f"precede end {self.end}")

    def covers(self, day: dt.date) -> bool:
        return self.start <= day <= self.end


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description.

    ``maturities`` are option lifetimes in calendar days (ACT/365 when
    converted to year fractions). ``rho_j`` selects how the jump-correlation
    parameter of the correlated-jump model is treated during calibration:
    "zero" pins it at 0, "calibrated" frees it, a float pins it at that
    value.
    """

    segments: tuple
    quotes_path: str
    prices_path: str
    models: tuple
    strategies: tuple
    maturities: tuple = (30,)
    n_paths: int = 100_000
    dt: float = DT_DAILY
    seed: int = 0
    r: float = 0.0
    rho_j: Union[str, float] = "zero"
    expiry_days: int = BACKTEST_EXPIRY_DAYS
    kde_h: float = 0.2
    svi_starts: int = 16
    calib_starts: int = 8
    calib_max_iter: int = 120

    def __post_init__(self):
        if not self.segments:
            raise DomainError("config: at least one segment is required")
        names = [s.name for s in self.segments]
        if len(set(names)) != len(names):
            raise DomainError("config: segment names must be unique")
        if not self.models:
            raise DomainError("config: at least one model is required")
        for fam in self.models:
            if fam not in _FAMILY_CLS:
                raise DomainError(f"config: unknown model family {fam!r}; "
                                  f"choose from {sorted(_FAMILY_CLS)}")
        if not self.strategies:
            raise DomainError("config: at least one strategy is required")
        for st in self.strategies:
            if st not in STRATEGIES:
                raise DomainError(f"config: unknown strategy {st!r}; "
                                  f"choose from {list(STRATEGIES)}")
        if not self.maturities:
            raise DomainError("config: at least one maturity is required")
        for d in self.maturities:
            if int(d) != d or d < 1:
                raise DomainError("config: maturities must be positive "
                                  "integer day counts")
        longest = max(self.maturities)
        for seg in self.segments:
            if (seg.end - seg.start).days <= longest:
                raise DomainError(
                    f"segment {seg.name!r} spans {(seg.end - seg.start).days} "
                    f"days, not longer than the longest maturity ({longest} "
                    "days)")
        if self.n_paths < 1:
            raise DomainError("config: n_paths must be positive")
        if not self.dt > 0:
            raise DomainError("config: dt must be positive")
        if not 0 <= self.seed < 2**64:
            raise DomainError("config: seed must fit an unsigned 64-bit int")
        if isinstance(self.rho_j, str):
            if self.rho_j not in ("zero", "calibrated"):
                raise DomainError("config: rho_j must be 'zero', 'calibrated' "
                                  "or a number")
        elif not -0.99 <= float(self.rho_j) <= 0.99:
            raise DomainError("config: fixed rho_j must lie in [-0.99, 0.99]")
        if self.expiry_days < 1:
            raise DomainError("config: expiry_days must be positive")
        if not self.kde_h > 0:
            raise DomainError("config: kde_h must be positive")
        if self.svi_starts < 1 or self.calib_starts < 1 or self.calib_max_iter < 1:
            raise DomainError("config: iteration counts must be positive")

    def segment(self, name: str) -> SegmentDef:
        for seg in self.segments:
            if seg.name == name:
                return seg
        raise DomainError(f"unknown segment {name!r}; config defines "
                          f"{[s.name for s in self.segments]}")

    def maturity_taus(self) -> tuple:
        return tuple(d / 365.0 for d in self.maturities)


def _as_date(value, context: str) -> dt.date:
    if isinstance(value, dt.date) and not isinstance(value, dt.datetime):
        return value
    if isinstance(value, str):
        try:
            return dt.date.fromisoformat(value)
        except ValueError as exc:
            raise SchemaError(f"{context}: invalid ISO date {value!r}") from exc
    raise SchemaError(f"{context}: expected an ISO date, got {value!r}")


def load_config(path) -> ExperimentConfig:
    """Parse and validate a YAML experiment config.

    Environment variables VOLHEDGE_QUOTES and VOLHEDGE_PRICES, when set,
    replace the data file paths; nothing else is overridable outside the
    file.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise SchemaError(f"config {path}: invalid YAML ({exc})") from exc
    if not isinstance(raw, dict):
        raise SchemaError(f"config {path}: top level must be a mapping")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise SchemaError(f"config {path}: unknown keys {sorted(unknown)}")
    for key in ("data", "segments", "models", "strategies"):
        if key not in raw:
            raise SchemaError(f"config {path}: missing required key {key!r}")
    data = raw["data"]
    if not isinstance(data, dict) or set(data) != {"quotes", "prices"}:
        raise SchemaError(f"config {path}: 'data' must map exactly "
                          "'quotes' and 'prices' to file paths")
    segments = []
    for i, seg in enumerate(raw["segments"]):
        if not isinstance(seg, dict) or set(seg) != {"name", "start", "end"}:
            raise SchemaError(f"config {path}: segment #{i + 1} must have "
                              "exactly name, start and end")
        segments.append(SegmentDef(name=str(seg["name"]),
                                   start=_as_date(seg["start"],
                                                  f"segment #{i + 1} start"),
                                   end=_as_date(seg["end"],
                                                f"segment #{i + 1} end")))
    rho_j = raw.get("rho_j", "zero")
    if not isinstance(rho_j, str):
        rho_j = float(rho_j)
    kwargs = {}
    for key, cast in (("maturities", lambda v: tuple(int(x) for x in v)),
                      ("n_paths", int), ("dt", float), ("seed", int),
                      ("r", float), ("expiry_days", int), ("kde_h", float),
                      ("svi_starts", int), ("calib_starts", int),
                      ("calib_max_iter", int)):
        if key in raw:
            try:
                kwargs[key] = cast(raw[key])
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"config {path}: bad value for "
                                  f"{key!r}: {raw[key]!r}") from exc
    quotes_path = os.environ.get("VOLHEDGE_QUOTES", str(data["quotes"]))
    prices_path = os.environ.get("VOLHEDGE_PRICES", str(data["prices"]))
    return ExperimentConfig(segments=tuple(segments),
                            quotes_path=quotes_path,
                            prices_path=prices_path,
                            models=tuple(str(m) for m in raw["models"]),
                            strategies=tuple(str(s) for s in raw["strategies"]),
                            rho_j=rho_j, **kwargs)


# ---------------------------------------------------------------------------
# market data loading
# ---------------------------------------------------------------------------

def _open_csv(path, columns: tuple) -> list:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: file not found")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if header is None:
            raise SchemaError(f"{path}: empty file (missing header)")
        if tuple(header) != columns:
            raise SchemaError(f"{path}: expected columns "
                              f"{','.join(columns)}, got {','.join(header)}")
        rows = [(reader.line_num, row) for row in reader]
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def load_quotes(path) -> list:
    """Read an option-quote CSV into QuoteRow records.

    Rows that repeat a (date, expiry, strike, type) key collapse to the one
    with the largest volume. Malformed rows fail with their line number.
    """
    best = {}
    for line_num, row in _open_csv(path, _QUOTE_COLUMNS):
        where = f"{path}: line {line_num}"
        try:
            quote = QuoteRow(date=dt.date.fromisoformat(row["date"]),
                             expiry=dt.date.fromisoformat(row["expiry"]),
                             strike=float(row["strike"]),
                             type=row["type"],
                             iv_mid=float(row["iv_mid"]),
                             volume=float(row["volume"]),
                             underlying=float(row["underlying"]))
        except (ValueError, DomainError) as exc:
            raise SchemaError(f"{where}: {exc}") from exc
        key = (quote.date, quote.expiry, quote.strike, quote.type)
        kept = best.get(key)
        if kept is None or quote.volume > kept.volume:
            best[key] = quote
    return sorted(best.values(),
                  key=lambda q: (q.date, q.expiry, q.strike, q.type))


def load_prices(path) -> tuple:
    """Read a daily close CSV into (dates, closes) with dates strictly
    increasing."""
    dates, closes = [], []
    for line_num, row in _open_csv(path, _PRICE_COLUMNS):
        where = f"{path}: line {line_num}"
        try:
            day = dt.date.fromisoformat(row["date"])
            close = float(row["close"])
        except ValueError as exc:
            raise SchemaError(f"{where}: {exc}") from exc
        if not close > 0:
            raise SchemaError(f"{where}: close must be positive, got {close}")
        if dates and day <= dates[-1]:
            raise SchemaError(f"{where}: date {day} not after {dates[-1]} "
                              "(rows must be strictly increasing)")
        dates.append(day)
        closes.append(close)
    return dates, np.asarray(closes)


# ---------------------------------------------------------------------------
# artifact serialization
# ---------------------------------------------------------------------------

def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _derive_seed(base: int, *tags: str) -> int:
    """Stable per-artifact seed: hash the base seed with the artifact tags so
    distinct segments and simulators never share a stream."""
    digest = hashlib.sha256("|".join([str(base), *tags]).encode()).digest()
    return int.from_bytes(digest[:8], "little") % 2**63


def _write_json(path: Path, payload, sort: bool = True) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=sort) + "\n")


def _read_json(path: Path, producer: str):
    if not path.exists():
        raise MissingArtifactError(
            f"{path} not found; run the {producer} command first")
    return json.loads(path.read_text())


def _surface_to_dict(surface: SviSurface) -> dict:
    return {
        "date": surface.date.isoformat(),
        "f0": surface.f0,
        "slices": [{"tau": sl.tau, "a": sl.a, "b": sl.b, "rho": sl.rho,
                    "m": sl.m, "sigma": sl.sigma} for sl in surface.slices],
    }


def _surface_from_dict(payload: dict) -> SviSurface:
    slices = tuple(SviSlice(tau=sl["tau"], a=sl["a"], b=sl["b"],
                            rho=sl["rho"], m=sl["m"], sigma=sl["sigma"])
                   for sl in payload["slices"])
    return SviSurface(slices=slices, f0=payload["f0"],
                      date=dt.date.fromisoformat(payload["date"]))


def _params_from_dict(family: str, values: dict):
    return _FAMILY_CLS[family](**values)


def _segment_quotes(quotes, seg: SegmentDef) -> list:
    rows = [q for q in quotes if seg.covers(q.date)]
    if not rows:
        raise DomainError(f"segment {seg.name!r}: no quotes between "
                          f"{seg.start} and {seg.end}")
    return rows


def _segment_prices(dates, closes, seg: SegmentDef) -> tuple:
    mask = [seg.covers(d) for d in dates]
    sel = [d for d, m in zip(dates, mask) if m]
    if not sel:
        raise DomainError(f"segment {seg.name!r}: no prices between "
                          f"{seg.start} and {seg.end}")
    return sel, closes[np.asarray(mask)]


# ---------------------------------------------------------------------------
# pipeline commands
# ---------------------------------------------------------------------------

class _Runner:
    """One command execution: resolves inputs, tracks consumed and produced
    files for the manifest."""

    def __init__(self, config: ExperimentConfig, out_dir, *,
                 config_path=None, segment=None, model=None, strategy=None):
        self.config = config
        self.out = Path(out_dir)
        self.config_path = config_path
        self.inputs: dict = {}
        self.artifacts: dict = {}
        if segment is not None:
            config.segment(segment)
        self.segments = [s for s in config.segments
                         if segment is None or s.name == segment]
        if model is not None and model not in config.models:
            raise DomainError(f"model {model!r} is not in the config's model "
                              f"list {list(config.models)}")
        self.models = [m for m in config.models
                       if model is None or m == model]
        if strategy is not None and strategy not in config.strategies:
            raise DomainError(f"strategy {strategy!r} is not in the config's "
                              f"strategy list {list(config.strategies)}")
        self.strategies = [s for s in config.strategies
                           if strategy is None or s == strategy]
        self._quotes = None
        self._prices = None

    def _track_input(self, path) -> None:
        self.inputs[str(path)] = _sha256(path)

    def quotes(self) -> list:
        if self._quotes is None:
            self._quotes = load_quotes(self.config.quotes_path)
            self._track_input(self.config.quotes_path)
        return self._quotes

    def prices(self) -> tuple:
        if self._prices is None:
            self._prices = load_prices(self.config.prices_path)
            self._track_input(self.config.prices_path)
        return self._prices

    def consume(self, relpath: str, producer: str) -> Path:
        path = self.out / relpath
        if not path.exists():
            raise MissingArtifactError(
                f"{path} not found; run the {producer} command first")
        self._track_input(path)
        return path

    def emit(self, relpath: str) -> Path:
        path = self.out / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def record(self, relpath: str) -> None:
        self.artifacts[relpath] = _sha256(self.out / relpath)

    def write_manifest(self, command: str) -> dict:
        manifest = {
            "command": command,
            "seed": self.config.seed,
            "filters": {
                "segments": [s.name for s in self.segments],
                "models": list(self.models),
                "strategies": list(self.strategies),
            },
            "inputs": self.inputs,
            "artifacts": self.artifacts,
            "versions": {
                "volhedge": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        }
        if self.config_path is not None:
            manifest["config"] = _sha256(self.config_path)
        _write_json(self.emit(f"manifests/{command}.json"), manifest)
        return manifest


def _cmd_fit_surface(rn: _Runner) -> None:
    for seg in rn.segments:
        rows = _segment_quotes(rn.quotes(), seg)
        days = sorted({q.date for q in rows})
        fitted = []
        for day in days:
            day_rows = [q for q in rows if q.date == day]
            surface = fit_svi_surface(day_rows, n_starts=rn.config.svi_starts,
                                      seed=rn.config.seed)
            fitted.append(_surface_to_dict(surface))
        relpath = f"surfaces/{seg.name}.json"
        _write_json(rn.emit(relpath), {"segment": seg.name,
                                       "surfaces": fitted})
        rn.record(relpath)
        logger.info("fit %d surfaces for segment %s", len(fitted), seg.name)


def _calib_config(cfg: ExperimentConfig, family: str):
    overrides = {"n_starts": cfg.calib_starts, "max_iter": cfg.calib_max_iter,
                 "seed": cfg.seed}
    if family != "svcj" or cfg.rho_j == "zero":
        return default_calib_config(family, r=cfg.r, **overrides)
    calib = default_calib_config(family, r=cfg.r, calibrate_rho_j=True,
                                 **overrides)
    if cfg.rho_j == "calibrated":
        return calib
    # pin a fixed jump correlation by shrinking its box to a hair's width;
    # the optimizer cannot move it and pricing sees the requested value
    pin = float(cfg.rho_j)
    bounds = list(calib.bounds)
    start = list(calib.start)
    bounds[-1] = (pin - 1e-9, pin + 1e-9)
    start[-1] = pin
    return dataclasses.replace(calib, bounds=tuple(bounds),
                               start=tuple(start))


def _cmd_calibrate(rn: _Runner) -> None:
    cfg = rn.config
    for seg in rn.segments:
        rows = _segment_quotes(rn.quotes(), seg)
        day = max(q.date for q in rows)
        day_rows = [q for q in rows if q.date == day]
        fitted = {}
        s0 = None
        for family in rn.models:
            result = calibrate(family, day_rows, _calib_config(cfg, family))
            params = result.params.params
            if family == "svcj" and not isinstance(cfg.rho_j, str):
                params = dataclasses.replace(params, rho_j=float(cfg.rho_j))
            s0 = result.params.s0
            fitted[family] = {
                "params": dataclasses.asdict(params),
                "rmse": result.rmse,
                "n_quotes": result.n_quotes,
                "converged": result.converged,
                "objective": result.objective,
            }
            logger.info("calibrated %s on %s %s: rmse %.3e over %d quotes",
                        family, seg.name, day, result.rmse, result.n_quotes)
        relpath = f"calibration/{seg.name}.json"
        _write_json(rn.emit(relpath), {"segment": seg.name,
                                       "date": day.isoformat(),
                                       "s0": s0, "r": cfg.r,
                                       "models": fitted})
        rn.record(relpath)


def _cmd_simulate(rn: _Runner) -> None:
    cfg = rn.config
    n_steps = max(round(d / 365.0 / cfg.dt) for d in cfg.maturities)
    for seg in rn.segments:
        calib = json.loads(
            rn.consume(f"calibration/{seg.name}.json", "calibrate")
            .read_text())
        if "svcj" not in calib["models"]:
            raise MissingArtifactError(
                f"calibration for segment {seg.name!r} has no svcj "
                "parameters; add svcj to the config's models and run the "
                "calibrate command first")
        params = _params_from_dict("svcj", calib["models"]["svcj"]["params"])
        seed = _derive_seed(cfg.seed, seg.name, "svcj")
        paths = simulate_svcj(params, s0=calib["s0"], r=cfg.r,
                              n_paths=cfg.n_paths, n_steps=n_steps,
                              dt=cfg.dt, seed=seed)
        relpath = f"paths/{seg.name}_svcj.npz"
        paths.save(rn.emit(relpath))
        rn.record(relpath)

        dates, closes = rn.prices()
        _, seg_closes = _segment_prices(dates, closes, seg)
        fit = fit_garch11(log_returns(seg_closes))
        sampler = KdeSampler(fit.residuals, h=cfg.kde_h)
        seed = _derive_seed(cfg.seed, seg.name, "garch_kde")
        paths = simulate_garch_kde(fit, sampler, s0=float(seg_closes[-1]),
                                   n_paths=cfg.n_paths, n_steps=n_steps,
                                   seed=seed, dt=cfg.dt)
        relpath = f"paths/{seg.name}_garch_kde.npz"
        paths.save(rn.emit(relpath))
        rn.record(relpath)
        logger.info("simulated %d paths x %d steps for segment %s",
                    cfg.n_paths, n_steps, seg.name)


def _inception_surface(rn: _Runner, seg_name: str,
                       date_iso: str) -> Optional[SviSurface]:
    payload = json.loads(
        rn.consume(f"surfaces/{seg_name}.json", "fit-surface").read_text())
    for entry in payload["surfaces"]:
        if entry["date"] == date_iso:
            return _surface_from_dict(entry)
    return None


def _market_premium(surface: Optional[SviSurface], s0: float,
                    option: OptionSpec, r: float) -> Optional[float]:
    """Mark an option off the fitted surface; None when the surface is
    missing or does not reach the requested expiry."""
    if surface is None:
        return None
    try:
        return interp_price(surface,
                            OptionSpec(strike=option.strike, tau=option.tau,
                                       is_call=option.is_call), r)
    except (ExtrapolationError, PriceBoundsError, DomainError):
        return None


def _load_index(path: Path) -> list:
    if path.exists():
        return json.loads(path.read_text())
    return []


def _cmd_hedge(rn: _Runner) -> None:
    cfg = rn.config
    index_path = rn.out / "pnl/index.json"
    index = {tuple(e["key"]): e for e in _load_index(index_path)}
    for seg in rn.segments:
        calib = json.loads(
            rn.consume(f"calibration/{seg.name}.json", "calibrate")
            .read_text())
        surface = _inception_surface(rn, seg.name, calib["date"])
        for simulator in SIMULATORS:
            paths = PathMatrix.load(
                rn.consume(f"paths/{seg.name}_{simulator}.npz", "simulate"))
            for family in rn.models:
                if family not in calib["models"]:
                    raise MissingArtifactError(
                        f"calibration for segment {seg.name!r} lacks "
                        f"{family}; run the calibrate command first")
                params = _params_from_dict(
                    family, calib["models"][family]["params"])
                model = ModelParams(params=params, r=cfg.r, s0=paths.s0)
                for strategy in rn.strategies:
                    for days in cfg.maturities:
                        try:
                            entry = _hedge_one(cfg, rn, seg.name, simulator,
                                               paths, model, strategy, days,
                                               surface)
                        except DomainError as exc:
                            # strategy/model pairs the engine rejects (e.g.
                            # vega hedging without a vol state) are logged
                            # and skipped, not fatal
                            logger.warning("skipping %s/%s/%s/%s (%dd): %s",
                                           seg.name, simulator, family,
                                           strategy, days, exc)
                            continue
                        index[tuple(entry["key"])] = entry
    entries = [index[k] for k in sorted(index)]
    _write_json(rn.emit("pnl/index.json"), entries)
    rn.record("pnl/index.json")


def _hedge_one(cfg: ExperimentConfig, rn: _Runner, seg_name: str,
               simulator: str, paths: PathMatrix, model: ModelParams,
               strategy: str, days: int, surface) -> dict:
    tau = days / 365.0
    target = OptionSpec(strike=paths.s0, tau=tau, is_call=True)
    second = None
    second_premium = None
    if strategy in ("delta_gamma", "delta_vega"):
        second = default_second_instrument(paths.s0, target)
        second_premium = _market_premium(surface, paths.s0, second, cfg.r)
    premium = _market_premium(surface, paths.s0, target, cfg.r)
    if premium is None:
        premium = instrument_price(model, target)
        logger.warning("%s %dd: no surface mark, premium from the %s model",
                       seg_name, days, model.family)
    spec = HedgeSpec(strategy=strategy, hedge_model=model, target=target,
                     second=second)
    ctx = PricingContext(premium=premium, second_premium=second_premium)
    pnl = run_hedge_experiment(paths, spec, ctx=ctx, r=cfg.r)
    rel = relative_pnl(pnl, premium, r=cfg.r, tau=tau)
    relpath = (f"pnl/{seg_name}_{simulator}_{model.family}_{strategy}_"
               f"{days}d.csv")
    write_pnl_csv(rn.emit(relpath), pnl, rel)
    rn.record(relpath)
    return {
        "key": [seg_name, simulator, model.family, strategy, days],
        "file": relpath,
        "segment": seg_name,
        "simulator": simulator,
        "model": model.family,
        "strategy": strategy,
        "maturity_days": days,
        "premium": premium,
        "n_paths": paths.n_paths,
    }


def _cmd_backtest(rn: _Runner) -> None:
    cfg = rn.config
    dates, closes = rn.prices()
    for seg in rn.segments:
        seg_dates, seg_closes = _segment_prices(dates, closes, seg)
        payload = json.loads(
            rn.consume(f"surfaces/{seg.name}.json", "fit-surface")
            .read_text())
        surfaces = {}
        for entry in payload["surfaces"]:
            surface = _surface_from_dict(entry)
            surfaces[surface.date] = surface
        result = run_backtest(seg_dates, seg_closes, surfaces, r=cfg.r,
                              expiry_days=cfg.expiry_days)
        if len(result.inceptions) == 0:
            raise DomainError(
                f"segment {seg.name!r}: price history too short for one "
                f"{cfg.expiry_days}-day hedge window")
        relpath = f"backtest/{seg.name}.csv"
        with rn.emit(relpath).open("w", newline="") as fh:
            fh.write("inception,pnl,rel_pnl\n")
            for day, pnl, rel in zip(result.inceptions, result.pnl,
                                     result.rel_pnl):
                fh.write(f"{day.isoformat()},{float(pnl)!r},{float(rel)!r}\n")
        rn.record(relpath)
        logger.info("backtested %d windows on segment %s (%d skipped)",
                    len(result.inceptions), seg.name, len(result.skipped))


def _read_rel_pnl(path: Path, column: str) -> np.ndarray:
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        values = [float(row[column]) for row in reader]
    return np.asarray(values)


def _cmd_report(rn: _Runner) -> None:
    index_path = rn.out / "pnl/index.json"
    if not index_path.exists():
        raise MissingArtifactError(
            f"{index_path} not found; run the hedge command first")
    rn._track_input(index_path)
    summary = []
    for entry in _load_index(index_path):
        if not any(s.name == entry["segment"] for s in rn.segments):
            continue
        if entry["model"] not in rn.models:
            continue
        if entry["strategy"] not in rn.strategies:
            continue
        rel = _read_rel_pnl(rn.consume(entry["file"], "hedge"), "rel_pnl")
        report = build_report(rel, strategy=entry["strategy"],
                              model=entry["model"],
                              simulator=entry["simulator"],
                              segment=entry["segment"])
        stem = Path(entry["file"]).stem
        # the report schema fixes the key order; do not resort it
        _write_json(rn.emit(f"reports/{stem}.json"), report.to_json_dict(),
                    sort=False)
        rn.record(f"reports/{stem}.json")
        write_plot_csv(rn.emit(f"reports/{stem}_plot.csv"), report)
        rn.record(f"reports/{stem}_plot.csv")
        summary.append((report, entry["maturity_days"]))

    for seg in rn.segments:
        path = rn.out / f"backtest/{seg.name}.csv"
        if not path.exists():
            continue
        rn._track_input(path)
        rel = _read_rel_pnl(path, "rel_pnl")
        report = build_report(rel, strategy="delta", model="bs",
                              simulator="history", segment=seg.name)
        _write_json(rn.emit(f"reports/backtest_{seg.name}.json"),
                    report.to_json_dict(), sort=False)
        rn.record(f"reports/backtest_{seg.name}.json")
        write_plot_csv(rn.emit(f"reports/backtest_{seg.name}_plot.csv"),
                       report)
        rn.record(f"reports/backtest_{seg.name}_plot.csv")
        summary.append((report, rn.config.expiry_days))

    summary.sort(key=lambda item: (item[0].segment, item[0].simulator,
                                   item[0].model, item[0].strategy, item[1]))
    with rn.emit("reports/summary.csv").open("w", newline="") as fh:
        fh.write("segment,simulator,model,strategy,maturity_days,n,min,"
                 "es05,es95,max,hedge_error\n")
        for rep, days in summary:
            fh.write(f"{rep.segment},{rep.simulator},{rep.model},"
                     f"{rep.strategy},{days},{rep.n},"
                     f"{rep.min!r},{rep.es_lower!r},{rep.es_upper!r},"
                     f"{rep.max!r},{rep.hedge_error!r}\n")
    rn.record("reports/summary.csv")


_COMMAND_FNS = {
    "fit-surface": _cmd_fit_surface,
    "calibrate": _cmd_calibrate,
    "simulate": _cmd_simulate,
    "hedge": _cmd_hedge,
    "backtest": _cmd_backtest,
    "report": _cmd_report,
}


def run(config: ExperimentConfig, command: str, out_dir, *,
        config_path=None, segment: Optional[str] = None,
        model: Optional[str] = None, strategy: Optional[str] = None) -> dict:
    """Execute one pipeline command and return its manifest."""
    if command not in _COMMAND_FNS:
        raise DomainError(f"unknown command {command!r}; choose from "
                          f"{list(COMMANDS)}")
    runner = _Runner(config, out_dir, config_path=config_path,
                     segment=segment, model=model, strategy=strategy)
    _COMMAND_FNS[command](runner)
    return runner.write_manifest(command)


def main(argv: Optional[Sequence[str]] = None) -> int:
    # exit code 2 is reserved for numeric failures, so argparse must not be
    # allowed to sys.exit(2) on usage errors
    parser = argparse.ArgumentParser(
        prog="volhedge", description="batch pipeline for option hedging "
        "experiments", exit_on_error=False)
    parser.add_argument("--config", required=True, help="YAML experiment config")
    parser.add_argument("--command", required=True, choices=COMMANDS)
    parser.add_argument("--out", required=True, help="artifact directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--segment", default=None,
                        help="restrict to one segment")
    parser.add_argument("--model", default=None,
                        help="restrict to one model family")
    parser.add_argument("--strategy", default=None,
                        help="restrict to one hedge strategy")
    try:
        args = parser.parse_args(argv)
    except argparse.ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse still exits directly for missing required arguments and
        # for --help; keep 0 for the latter, map usage errors to 1
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed)
        run(config, args.command, args.out, config_path=args.config,
            segment=args.segment, model=args.model, strategy=args.strategy)
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except VolhedgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
