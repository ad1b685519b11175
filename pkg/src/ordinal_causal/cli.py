"""Command-line interface: ``ordinal-causal {estimate,curve,gamma,simulate}``.

Exit codes: 0 success, 2 configuration or input error, 3 nuisance fit
failure, 4 numerical failure.
"""

import argparse
import csv
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._io import atomic_write_text, csv_text, json_text
from .copula import CopulaSpec, Family
from .errors import (
    DataError,
    FitError,
    InvalidGamma,
    InvalidParameter,
    NumericalError,
    StudyFailed,
    UnsupportedCopula,
    UnsupportedTau,
)
from .estimands import Estimand, Mode, cross_fit, frechet_envelope, one_step, unconditional_dr
from .nuisance import (
    ConstantPropensity,
    Dataset,
    LogisticPropensity,
    ParametricNuisance,
    ProportionalOdds,
    StratifiedNuisance,
    fit_crossfit,
    fit_nuisance,
)
from .sensitivity import DEFAULT_GAMMA_GRID, breakeven_gamma, endpoint_one_step, tau_curve
from . import simulation as sim

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_FIT, EXIT_NUMERIC = 0, 2, 3, 4

CURVE_COLUMNS = ["tau", "point", "se", "ci_low", "ci_high", "env_low", "env_high"]
GAMMA_COLUMNS = [
    "family", "tau", "gamma", "lower", "lower_se", "lower_ci_low", "lower_ci_high",
    "upper", "upper_se", "upper_ci_low", "upper_ci_high",
]
ESTIMATE_COLUMNS = ["estimand", "mode", "copula", "rho", "tau", "point", "raw_point", "se",
                    "ci_low", "ci_high", "alpha", "n", "env_low", "env_high"]

_TOP_KEYS = {
    "schema_version", "input", "columns", "levels", "estimand", "copula", "taus", "families",
    "gammas", "null_value", "gamma_max", "gamma_tol", "alpha", "mode", "folds", "seed",
    "nuisance", "influence_out", "out", "format", "simulation",
}
_COLUMN_KEYS = {"outcome", "treatment", "covariates"}
_COPULA_KEYS = {"family", "tau", "rho"}
_NUISANCE_KEYS = {"model", "outcome", "propensity", "trim", "eps_f"}
_SIM_KEYS = {"design", "n", "L", "delta", "s", "gamma0", "n_reps", "estimators", "truth_draws",
             "truth_seed"}
_EST_KEYS = {"label", "copula", "estimand", "mode", "nuisance", "folds", "gamma"}


class ConfigError(Exception):
    """Invalid configuration or input; reported with exit code 2."""


# --- config parsing ---------------------------------------------------------


@dataclass
class AnalysisConfig:
    input: str = None
    outcome: str = "y"
    treatment: str = "a"
    covariates: list = field(default_factory=list)
    levels: list = None
    estimands: list = field(default_factory=lambda: [Estimand.PSI])
    copula: CopulaSpec = None
    family: Family = Family.GUMBEL
    taus: list = None
    families: list = None
    gammas: list = field(default_factory=lambda: list(DEFAULT_GAMMA_GRID))
    null_value: float = None
    gamma_max: float = 10.0
    gamma_tol: float = 1e-3
    alpha: float = 0.05
    mode: Mode = Mode.ONE_STEP
    folds: int = 10
    seed: int = 0
    nuisance_model: str = "parametric"
    outcome_model: str = "pooled"
    propensity: object = "logistic"
    trim: float = 0.01
    eps_f: float = 1e-6
    influence_out: str = None
    out: str = None
    format: str = None
    simulation: dict = None


def _line_of(text, key):
    if text is None:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


class _Reader:
    def __init__(self, raw, text, source):
        self.raw = raw
        self.text = text
        self.source = source

    def fail(self, key, message):
        line = _line_of(self.text, key)
        where = f"{self.source}:{line}" if line else self.source
        raise ConfigError(f"{where}: {message}")

    def check_keys(self, obj, allowed, context):
        if not isinstance(obj, dict):
            self.fail(context, f"'{context}' must be a JSON object")
        for k in obj:
            if k not in allowed:
                self.fail(k, f"unknown key '{k}' in {context} (allowed: {', '.join(sorted(allowed))})")


def _number(reader, key, value, lo=-math.inf, hi=math.inf, integer=False, open_lo=False, open_hi=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        reader.fail(key, f"'{key}' must be a number")
    if integer and int(value) != value:
        reader.fail(key, f"'{key}' must be an integer")
    bad = value < lo or value > hi or (open_lo and value == lo) or (open_hi and value == hi)
    if bad or not math.isfinite(value):
        left = "(" if open_lo else "["
        right = ")" if open_hi else "]"
        reader.fail(key, f"'{key}'={value} outside {left}{lo}, {hi}{right}")
    return int(value) if integer else float(value)


def _copula(reader, obj, key="copula"):
    reader.check_keys(obj, _COPULA_KEYS, key)
    if "family" not in obj:
        reader.fail(key, f"'{key}' needs a 'family'")
    try:
        family = Family.parse(obj["family"])
    except InvalidParameter as exc:
        reader.fail("family", str(exc))
    has_tau, has_rho = "tau" in obj, "rho" in obj
    if has_tau and has_rho:
        reader.fail(key, "give exactly one of 'tau' or 'rho'")
    try:
        if has_tau:
            return CopulaSpec.from_tau(family, _number(reader, "tau", obj["tau"]))
        if has_rho:
            return CopulaSpec(family, _number(reader, "rho", obj["rho"]))
        if family.parametric:
            reader.fail(key, "give exactly one of 'tau' or 'rho'")
        return CopulaSpec(family)
    except (UnsupportedTau, InvalidParameter) as exc:
        reader.fail("tau" if has_tau else "rho", str(exc))


def parse_config(raw, text=None, source="config"):
    """Validate a decoded JSON config; every problem raises ConfigError."""
    r = _Reader(raw, text, source)
    r.check_keys(raw, _TOP_KEYS, "config")
    cfg = AnalysisConfig()
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        r.fail("schema_version", f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    if "input" in raw:
        cfg.input = str(raw["input"])
    if "columns" in raw:
        cols = raw["columns"]
        r.check_keys(cols, _COLUMN_KEYS, "columns")
        cfg.outcome = str(cols.get("outcome", cfg.outcome))
        cfg.treatment = str(cols.get("treatment", cfg.treatment))
        covs = cols.get("covariates", [])
        if not isinstance(covs, list):
            r.fail("covariates", "'covariates' must be a list of column names")
        cfg.covariates = [str(c) for c in covs]
    if "levels" in raw:
        levels = raw["levels"]
        if not isinstance(levels, list) or len(levels) < 2 or len(set(map(str, levels))) != len(levels):
            r.fail("levels", "'levels' must list at least two distinct outcome labels in order")
        cfg.levels = [str(v) for v in levels]
    if "estimand" in raw:
        est = raw["estimand"]
        est = est if isinstance(est, list) else [est]
        try:
            cfg.estimands = [Estimand.parse(e) for e in est]
        except ValueError as exc:
            r.fail("estimand", str(exc))
        if not cfg.estimands:
            r.fail("estimand", "'estimand' is empty")
    if "copula" in raw:
        cfg.copula = _copula(r, raw["copula"])
        cfg.family = cfg.copula.family
    if "taus" in raw:
        taus = raw["taus"]
        if not isinstance(taus, list) or not taus:
            r.fail("taus", "'taus' must be a nonempty list")
        cfg.taus = [_number(r, "taus", t, -1.0, 1.0, open_lo=True, open_hi=True) for t in taus]
        if any(b <= a for a, b in zip(cfg.taus, cfg.taus[1:])):
            r.fail("taus", "'taus' must be strictly increasing")
    if "families" in raw:
        fams = raw["families"]
        if not isinstance(fams, list) or not fams:
            r.fail("families", "'families' must be a nonempty list")
        try:
            cfg.families = [Family.parse(f) for f in fams]
        except InvalidParameter as exc:
            r.fail("families", str(exc))
    if "gammas" in raw:
        gammas = raw["gammas"]
        if not isinstance(gammas, list) or not gammas:
            r.fail("gammas", "'gammas' must be a nonempty list")
        cfg.gammas = [_number(r, "gammas", g, 1.0) for g in gammas]
    if "null_value" in raw:
        cfg.null_value = _number(r, "null_value", raw["null_value"], -1.0, 1.0)
    if "gamma_max" in raw:
        cfg.gamma_max = _number(r, "gamma_max", raw["gamma_max"], 1.0, open_lo=True)
    if "gamma_tol" in raw:
        cfg.gamma_tol = _number(r, "gamma_tol", raw["gamma_tol"], 0.0, open_lo=True)
    if "alpha" in raw:
        cfg.alpha = _number(r, "alpha", raw["alpha"], 0.0, 0.5, open_lo=True, open_hi=True)
    if "mode" in raw:
        try:
            cfg.mode = Mode.parse(raw["mode"])
        except ValueError as exc:
            r.fail("mode", str(exc))
    if "folds" in raw:
        cfg.folds = _number(r, "folds", raw["folds"], 2, integer=True)
    if "seed" in raw:
        cfg.seed = _number(r, "seed", raw["seed"], 0, integer=True)
    if "nuisance" in raw:
        nu = raw["nuisance"]
        r.check_keys(nu, _NUISANCE_KEYS, "nuisance")
        model = nu.get("model", "parametric")
        if model not in ("parametric", "stratified"):
            r.fail("model", "nuisance 'model' must be 'parametric' or 'stratified'")
        cfg.nuisance_model = model
        outcome = nu.get("outcome", "pooled")
        if outcome not in ("pooled", "per_arm"):
            r.fail("outcome", "nuisance 'outcome' must be 'pooled' or 'per_arm'")
        cfg.outcome_model = outcome
        prop = nu.get("propensity", "logistic")
        if prop != "logistic":
            prop = _number(r, "propensity", prop, 0.0, 1.0, open_lo=True, open_hi=True)
        cfg.propensity = prop
        if "trim" in nu:
            cfg.trim = _number(r, "trim", nu["trim"], 0.0, 0.5, open_hi=True)
        if "eps_f" in nu:
            cfg.eps_f = _number(r, "eps_f", nu["eps_f"], 0.0, 0.5, open_hi=True)
    for key in ("influence_out", "out"):
        if key in raw:
            setattr(cfg, key, str(raw[key]))
    if "format" in raw:
        if raw["format"] not in ("csv", "json"):
            r.fail("format", "'format' must be 'csv' or 'json'")
        cfg.format = raw["format"]
    if "simulation" in raw:
        cfg.simulation = _simulation(r, raw["simulation"])
    if cfg.taus is not None:
        for fam in cfg.families or [cfg.family]:
            for t in cfg.taus:
                try:
                    CopulaSpec.from_tau(fam, t)
                except UnsupportedTau as exc:
                    r.fail("taus", str(exc))
    return cfg


def _simulation(r, obj):
    r.check_keys(obj, _SIM_KEYS, "simulation")
    design = obj.get("design", "baseline")
    if design not in ("baseline", "unconditional", "confounded", "heterogeneous_tau"):
        r.fail("design", f"unknown design {design!r}")
    out = {"design": design}
    out["n"] = _number(r, "n", obj.get("n", 1000), 2, integer=True)
    out["L"] = _number(r, "L", obj.get("L", 5), 2, integer=True)
    out["delta"] = _number(r, "delta", obj.get("delta", 0.4))
    out["s"] = _number(r, "s", obj.get("s", 0.0))
    out["gamma0"] = _number(r, "gamma0", obj.get("gamma0", 2.0), 1.0)
    out["n_reps"] = _number(r, "n_reps", obj.get("n_reps", 200), integer=True)
    if out["n_reps"] < 2:
        r.fail("n_reps", f"'n_reps' must be at least 2, got {out['n_reps']}")
    out["truth_draws"] = _number(r, "truth_draws", obj.get("truth_draws", 500_000), 1, integer=True)
    out["truth_seed"] = _number(r, "truth_seed", obj.get("truth_seed", 20240101), 0, integer=True)
    ests = obj.get("estimators")
    if not isinstance(ests, list) or not ests:
        r.fail("estimators", "'estimators' must be a nonempty list")
    configs = []
    for e in ests:
        r.check_keys(e, _EST_KEYS, "estimators")
        if "label" not in e or "copula" not in e:
            r.fail("estimators", "each estimator needs 'label' and 'copula'")
        try:
            estimand = Estimand.parse(e.get("estimand", "psi")).value
            mode = Mode.parse(e.get("mode", "one_step")).value
        except ValueError as exc:
            r.fail("estimators", str(exc))
        nuis = e.get("nuisance", "parametric")
        if nuis not in ("parametric", "stratified", "oracle"):
            r.fail("nuisance", f"unknown estimator nuisance {nuis!r}")
        gamma = e.get("gamma")
        if gamma is not None:
            gamma = _number(r, "gamma", gamma, 1.0)
        configs.append(sim.EstimatorConfig(
            label=str(e["label"]), copula=_copula(r, e["copula"]), estimand=estimand, mode=mode,
            nuisance=nuis, K=_number(r, "folds", e.get("folds", 10), 2, integer=True), gamma=gamma,
        ))
    if len({c.label for c in configs}) != len(configs):
        r.fail("label", "estimator labels must be unique")
    out["estimators"] = configs
    return out


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return parse_config(raw, text, path)


# --- data ingestion ---------------------------------------------------------


def read_dataset(cfg):
    """Read the CSV named in ``cfg`` into a Dataset plus the level labels used."""
    if not cfg.input:
        raise ConfigError("no input CSV given (use --input or 'input' in the config)")
    try:
        fh = open(cfg.input, encoding="utf-8", newline="")
    except OSError as exc:
        raise ConfigError(f"{cfg.input}: cannot read input ({exc.strerror})") from None
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise ConfigError(f"{cfg.input}: missing header row")
        for col in [cfg.outcome, cfg.treatment, *cfg.covariates]:
            if col not in header:
                raise ConfigError(f"{cfg.input}: column '{col}' not found (header: {', '.join(header)})")
        ys, As, xs = [], [], []
        for row in reader:
            line = reader.line_num
            ys.append((row[cfg.outcome] or "").strip())
            try:
                As.append(int(float(row[cfg.treatment])))
            except (TypeError, ValueError):
                raise ConfigError(f"{cfg.input}:{line}: treatment value {row[cfg.treatment]!r} is not 0/1") from None
            try:
                xs.append([float(row[c]) for c in cfg.covariates])
            except (TypeError, ValueError):
                raise ConfigError(f"{cfg.input}:{line}: non-numeric covariate value") from None
    if not ys:
        raise ConfigError(f"{cfg.input}: no data rows")
    y, labels = _code_levels(cfg, ys)
    x = np.asarray(xs, dtype=float).reshape(len(ys), len(cfg.covariates))
    try:
        return Dataset(y, np.asarray(As), x, len(labels)), labels
    except DataError as exc:
        raise ConfigError(f"{cfg.input}: {exc}") from None


def _code_levels(cfg, ys):
    if cfg.levels is not None:
        index = {lab: i for i, lab in enumerate(cfg.levels)}
        coded = []
        for i, v in enumerate(ys):
            if v not in index:
                key = _normalise_number(v)
                if key not in index:
                    raise ConfigError(f"{cfg.input}:{i + 2}: outcome {v!r} not in the level map")
                v = key
            coded.append(index[v])
        return np.asarray(coded), list(cfg.levels)
    try:
        vals = [float(v) for v in ys]
    except ValueError:
        raise ConfigError(f"{cfg.input}: outcome values must be integers 0..L-1 (or supply 'levels')") from None
    if any(v != int(v) or v < 0 for v in vals):
        raise ConfigError(f"{cfg.input}: outcome values must be integers 0..L-1 (or supply 'levels')")
    y = np.asarray(vals, dtype=np.int64)
    L = int(y.max()) + 1
    missing = sorted(set(range(L)) - set(y.tolist()))
    if missing:
        raise ConfigError(
            f"{cfg.input}: outcome levels {missing} never occur; codes must be contiguous 0..{L - 1} "
            "(supply 'levels' to declare empty categories)"
        )
    return y, [str(k) for k in range(L)]


def _normalise_number(v):
    try:
        f = float(v)
    except ValueError:
        return v
    return str(int(f)) if f == int(f) else v


# --- nuisance assembly --------------------------------------------------------


def _model_factory(cfg):
    if cfg.nuisance_model == "stratified":
        return StratifiedNuisance

    def factory():
        prop = LogisticPropensity() if cfg.propensity == "logistic" else ConstantPropensity(cfg.propensity)
        return ParametricNuisance(prop, ProportionalOdds(per_arm=cfg.outcome_model == "per_arm"))

    return factory


def _fit(cfg, data):
    factory = _model_factory(cfg)
    if cfg.mode is Mode.CROSS_FIT:
        return fit_crossfit(data, cfg.folds, cfg.seed, factory, cfg.trim, cfg.eps_f)
    return fit_nuisance(data, factory(), cfg.trim, cfg.eps_f)


def _estimate(cfg, data, fit, spec, estimand):
    if cfg.mode is Mode.UNCONDITIONAL_DR:
        return unconditional_dr(data, fit, spec, estimand, cfg.alpha)
    return one_step(data, fit, spec, estimand, cfg.alpha, cfg.mode)


def _require_copula(cfg):
    if cfg.copula is None:
        raise ConfigError("config needs a 'copula' object with a family and one of tau/rho")
    return cfg.copula


# --- output -----------------------------------------------------------------


def _output_format(cfg, default):
    if cfg.format:
        return cfg.format
    if cfg.out and cfg.out.endswith(".json"):
        return "json"
    if cfg.out and cfg.out.endswith(".csv"):
        return "csv"
    return default


def _emit(cfg, rows, columns, payload, default_format):
    fmt = _output_format(cfg, default_format)
    text = csv_text(rows, columns) if fmt == "csv" else json_text(payload)
    if cfg.out:
        atomic_write_text(cfg.out, text)
    else:
        sys.stdout.write(text)


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


# --- subcommands ------------------------------------------------------------


def cmd_estimate(cfg):
    spec = _require_copula(cfg)
    data, labels = read_dataset(cfg)
    fit = _fit(cfg, data)
    rows = []
    influence = {}
    for est in cfg.estimands:
        res = _estimate(cfg, data, fit, spec, est)
        env = frechet_envelope(data, fit, est)
        row = res.to_dict()
        row.update(env_low=env[0], env_high=env[1])
        rows.append(row)
        influence[est.value] = res.if_values
    payload = {"n": data.n, "L": data.L, "levels": labels, "level_map": fit.level_map,
               "results": rows}
    _emit(cfg, rows, ESTIMATE_COLUMNS, _clean(payload), "json")
    if cfg.influence_out:
        cols = ["unit"] + [f"if_{k}" for k in influence]
        inf_rows = [
            {"unit": i, **{f"if_{k}": float(v[i]) for k, v in influence.items()}} for i in range(data.n)
        ]
        atomic_write_text(cfg.influence_out, csv_text(inf_rows, cols))
    return EXIT_OK


def _single_estimand(cfg):
    if len(cfg.estimands) != 1:
        raise ConfigError("this subcommand takes a single 'estimand'")
    return cfg.estimands[0]


def cmd_curve(cfg):
    estimand = _single_estimand(cfg)
    family = cfg.family
    taus = cfg.taus
    if taus is None:
        spec = _require_copula(cfg)
        taus = [float(spec.tau)]
    data, _ = read_dataset(cfg)
    fit = _fit(cfg, data)
    curve = tau_curve(data, fit, family, taus, estimand, cfg.alpha, cfg.mode)
    rows = curve.rows()
    payload = {"estimand": estimand.value, "family": family.value, "mode": cfg.mode.value, "rows": rows}
    _emit(cfg, rows, CURVE_COLUMNS, _clean(payload), "csv")
    return EXIT_OK


def cmd_gamma(cfg):
    estimand = _single_estimand(cfg)
    if cfg.mode is Mode.UNCONDITIONAL_DR:
        raise ConfigError("the Gamma analysis is defined for the conditional copula model only")
    families = cfg.families or [cfg.family]
    if cfg.taus is not None:
        taus = cfg.taus
    else:
        taus = [float(_require_copula(cfg).tau)]
    data, _ = read_dataset(cfg)
    fit = _fit(cfg, data)
    rows = []
    report = {"estimand": estimand.value, "null_value": cfg.null_value, "families": {}}
    for fam in families:
        per_tau = []
        for t in taus:
            spec = CopulaSpec.from_tau(fam, t)
            for g in cfg.gammas:
                res = endpoint_one_step(data, fit, spec, g, estimand, cfg.alpha, cfg.mode)
                rows.append({"family": fam.value, **res.to_dict(), "tau": t})
            if cfg.null_value is not None:
                be = breakeven_gamma(data, fit, spec, estimand, cfg.null_value, cfg.gamma_max,
                                     cfg.gamma_tol, cfg.alpha, cfg.mode)
                per_tau.append({"tau": t, "gamma_star": be.gamma_star,
                                "not_identified_at_one": be.not_identified_at_one, "capped": be.capped})
        if per_tau:
            report["families"][fam.value] = {
                "breakeven_min_over_tau": min(p["gamma_star"] for p in per_tau),
                "per_tau": per_tau,
            }
    _emit(cfg, rows, GAMMA_COLUMNS, _clean({"rows": rows, "breakeven": report}), "csv")
    if cfg.null_value is not None:
        text = json_text(_clean(report))
        if cfg.out:
            atomic_write_text(cfg.out + ".breakeven.json", text)
        else:
            sys.stderr.write(text)
    return EXIT_OK


def _design(sim_cfg):
    d = sim_cfg["design"]
    n = sim_cfg["n"]
    if d == "baseline":
        return sim.baseline_spec(n=n, L=sim_cfg["L"], delta=sim_cfg["delta"])
    if d == "unconditional":
        return sim.unconditional_spec(n=n)
    if d == "confounded":
        return sim.confounded_spec(sim_cfg["gamma0"], n=n)
    return sim.heterogeneous_tau_spec(sim_cfg["s"], n=n)


def cmd_simulate(cfg, workers=1):
    if cfg.simulation is None:
        raise ConfigError("config needs a 'simulation' block")
    s = cfg.simulation
    spec = _design(s)
    tr = sim.truth(spec, s["truth_draws"], s["truth_seed"])
    table = sim.run_study(spec, s["estimators"], s["n_reps"], cfg.alpha, cfg.seed, workers, tr)
    fmt = _output_format(cfg, "csv")
    text = table.to_csv() if fmt == "csv" else table.to_json()
    if cfg.out:
        atomic_write_text(cfg.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"estimate": cmd_estimate, "curve": cmd_curve, "gamma": cmd_gamma, "simulate": cmd_simulate}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ordinal-causal",
        description="Copula-based causal estimands for ordinal outcomes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--input", help="input CSV (overrides the config)")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--format", choices=["csv", "json"])
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help="worker processes (default: $ORDINAL_CAUSAL_THREADS or 1)")
        p.add_argument("--levels", help="comma-separated outcome labels in increasing order")
        if name == "estimate":
            p.add_argument("--influence-out", help="write per-unit influence values to this CSV")
    return parser


def _threads(arg):
    if arg is not None:
        value = arg
    else:
        env = os.environ.get("ORDINAL_CAUSAL_THREADS")
        if env is None:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"ORDINAL_CAUSAL_THREADS={env!r} is not an integer") from None
    if value < 1:
        raise ConfigError("--threads must be at least 1")
    return value


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.input:
            cfg.input = args.input
        if args.out:
            cfg.out = args.out
        if args.format:
            cfg.format = args.format
        if getattr(args, "influence_out", None):
            cfg.influence_out = args.influence_out
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg.seed = args.seed
        if args.levels:
            cfg.levels = [v.strip() for v in args.levels.split(",")]
            if len(cfg.levels) < 2 or len(set(cfg.levels)) != len(cfg.levels):
                raise ConfigError("--levels needs at least two distinct labels")
        workers = _threads(args.threads)
        if args.command == "simulate":
            return cmd_simulate(cfg, workers)
        return COMMANDS[args.command](cfg)
    except (ConfigError, UnsupportedTau, InvalidParameter, InvalidGamma, UnsupportedCopula) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, StudyFailed) as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
