"""Command-line entry point: ``pilotfusion <command> ...``.

Commands
--------
experiment   run every method over the high-fidelity sample counts, one CSV per method
density      simulate one weight setting over the novel encounters and write its density grid
gen-data     generate a dataset file
fit          fit one predictor to dataset files and save it as JSON
predict      apply a saved predictor to the encounters of a dataset (or features) file
lower-bound  error of the ground-truth model on a test dataset
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .density import ActionDensity, WeightGrid, kde2d, simulate_family_actions
from .evaluation import lower_bound, test_error
from .experiment import (METHODS, SCENARIOS, ExperimentConfig, density_families, dump_config,
                         load_config, novel_seeds, parse_overrides, run_experiment)
from .model_based import (PredictionTable, WeightPosterior, bayes_posterior, map_estimate_hifi,
                          map_estimate_multifidelity, predict_bayes, predict_map)
from .model_free import AugmentedLwPredictor, LwPredictor, fit_lw, fit_multifidelity, lw_predict
from .perception import Fidelity
from .pilot import UtilityWeights
from .scenario import (NOVEL_BEARINGS, STATE_COLUMNS, TEST_BEARINGS, TRAIN_BEARINGS, Dataset,
                       generate_dataset, load_dataset, sample_encounters, save_dataset)

log = logging.getLogger("pilotfusion")

BEARINGS = {"train": TRAIN_BEARINGS, "test": TEST_BEARINGS, "novel": NOVEL_BEARINGS}
MODEL_FORMAT = "pilotfusion-model/1"


class CliError(Exception):
    """A user-facing error; printed without a traceback."""


def _existing(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    return path


def _config(args, flag_names=("seed", "cache_dir")) -> ExperimentConfig:
    """Config file (if any), then ``--set`` pairs, then the dedicated flags in ``flag_names``."""
    sets = list(getattr(args, "set", None) or [])
    for pair in sets:
        if "=" not in pair:
            raise CliError(f"--set expects key=value, got {pair!r}")
    config = load_config(_existing(args.config), sets) if args.config else parse_overrides(sets)
    flags = {}
    for name in flag_names:
        value = getattr(args, name, None)
        if value is not None:
            flags[name] = tuple(value) if isinstance(value, list) else value
    return parse_overrides(flags, config) if flags else config


# -- experiment -----------------------------------------------------------------

EXPERIMENT_FLAGS = ("seed", "scenario", "lofi", "hifi", "replicates", "workers", "cache_dir")


def cmd_experiment(args) -> int:
    config = _config(args, EXPERIMENT_FLAGS)
    summary, results = run_experiment(config, args.out)
    missing = sum(1 for r in results if isinstance(r.efficiency, float) and math.isnan(r.efficiency))
    for method, rows in summary.items():
        cells = "  ".join(f"{n}:{score:.3f}±{se:.3f}" for n, score, se in rows)
        print(f"{method:14s} {cells}")
    if missing:
        print(f"{missing} cell(s) failed; see the log", file=sys.stderr)
    print(f"wrote {len(summary)} CSV files to {args.out}")
    return 0


# -- density --------------------------------------------------------------------

def render_density(weights: UtilityWeights, fidelity, config: ExperimentConfig) -> ActionDensity:
    """Joint-action density of one weight setting over the experiment's novel encounters."""
    enc_seed, dec_seed = novel_seeds(config.seed)
    novel = sample_encounters(config.n_novel, NOVEL_BEARINGS, config.geometry, enc_seed)
    single = WeightGrid([weights.w1], [weights.w2])
    actions = simulate_family_actions(single, novel, Fidelity.parse(fidelity), config.decision, dec_seed)[0]
    return kde2d(actions, config.grid, config.kde)


def write_density_grid(density: ActionDensity, path) -> None:
    """Long-format CSV in degrees; the density is per square degree so it integrates to 1 there."""
    axis_deg = np.degrees(density.grid.axis)
    per_deg2 = density.values * (math.pi / 180.0) ** 2
    lines = ["a1_deg,a2_deg,density"]
    for i, x in enumerate(axis_deg):
        for j, y in enumerate(axis_deg):
            lines.append(f"{float(x)!r},{float(y)!r},{float(per_deg2[i, j])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_density(args) -> int:
    density = render_density(UtilityWeights(args.w1, args.w2), args.fidelity, _config(args))
    write_density_grid(density, args.out)
    half = density.grid.bound / 2
    print(f"integral {density.integral():.6f}  mass within |a| <= {half:g} rad "
          f"{density.mass_within(half):.3f}  mean |a| {density.mean_abs_action():.3f} rad")
    return 0


# -- gen-data -------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    config = _config(args, ())
    ds = generate_dataset(args.n, Fidelity.parse(args.fidelity), UtilityWeights(args.w1, args.w2),
                          BEARINGS[args.bearings], config.geometry, config.decision, args.seed)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} records to {args.out}")
    return 0


# -- fit / predict --------------------------------------------------------------

def _lw_to_json(p: LwPredictor) -> dict:
    return {name: getattr(p, name).tolist() for name in ("features", "targets", "mean", "std")}


def _lw_from_json(d: dict) -> LwPredictor:
    return LwPredictor(*(np.asarray(d[name], dtype=float)
                         for name in ("features", "targets", "mean", "std")))


def _load_training(path, fidelity: Fidelity, role: str) -> Dataset:
    ds = load_dataset(_existing(path))
    if ds.fidelity != fidelity:
        log.warning("%s file %s holds %s-fidelity data", role, path, ds.fidelity.value)
    return ds


def fit_model(method: str, hifi: Dataset, lofi: Dataset | None, config: ExperimentConfig) -> dict:
    """Fit ``method`` and return its JSON-serialisable description."""
    if method not in METHODS:
        raise CliError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    needs_lofi = method in ("mf-multi", "mb-map-multi", "mb-bayes")
    if needs_lofi and lofi is None:
        raise CliError(f"method {method} needs --lofi")
    model = {"format": MODEL_FORMAT, "method": method, "config": dump_config(config)}
    if method == "mf-hifi":
        model["predictor"] = _lw_to_json(fit_lw(hifi.states, hifi.actions))
        return model
    if method == "mf-multi":
        fitted = fit_multifidelity(lofi, hifi)
        model["low"], model["high"] = _lw_to_json(fitted.low), _lw_to_json(fitted.high)
        return model
    families = density_families(config)
    fam_low, fam_high = families[Fidelity.LOW], families[Fidelity.HIGH]
    if method == "mb-map-hifi":
        w = map_estimate_hifi(hifi, fam_high)
    elif method == "mb-map-multi":
        w = map_estimate_multifidelity(lofi, hifi, fam_low, fam_high)
    else:
        posterior = bayes_posterior(lofi, hifi, fam_low, fam_high, config.prior())
        model["w1_values"] = posterior.weight_grid.w1_values.tolist()
        model["w2_values"] = posterior.weight_grid.w2_values.tolist()
        model["probabilities"] = posterior.probabilities.tolist()
        return model
    model["w1"], model["w2"] = w.w1, w.w2
    return model


def cmd_fit(args) -> int:
    config = _config(args)
    hifi = _load_training(args.hifi, Fidelity.HIGH, "--hifi")
    lofi = _load_training(args.lofi, Fidelity.LOW, "--lofi") if args.lofi else None
    model = fit_model(args.method, hifi, lofi, config)
    Path(args.out).write_text(json.dumps(model, indent=1) + "\n")
    summary = (f"w = ({model['w1']}, {model['w2']})" if "w1" in model else "")
    print(f"fitted {args.method} on {len(hifi)} high-fidelity records {summary}".rstrip())
    return 0


def load_model(path) -> dict:
    path = _existing(path)
    try:
        model = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: not a model file ({exc})") from None
    if not isinstance(model, dict) or model.get("format") != MODEL_FORMAT:
        raise CliError(f"{path}: not a {MODEL_FORMAT} file")
    return model


def read_query_states(path) -> np.ndarray:
    """Encounter states from a dataset file, or from a plain CSV of features with one header row."""
    path = _existing(path)
    text = path.read_text()
    if text.startswith("#"):
        return load_dataset(path).states
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise CliError(f"{path}: expected a header row and at least one data row")
    width = len(lines[0].split(","))
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != width:
            raise CliError(f"{path}:{lineno}: expected {width} fields, got {len(fields)}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise CliError(f"{path}:{lineno}: non-numeric field") from None
    return np.array(rows)


def predict_with_model(model: dict, states: np.ndarray, seed: int, n_samples: int | None = None):
    config = parse_overrides(dict(line.split(" = ", 1) for line in model["config"].splitlines()))
    n_samples = config.n_samples if n_samples is None else n_samples
    method = model["method"]
    if method == "mf-hifi":
        return lw_predict(_lw_from_json(model["predictor"]), np.atleast_2d(states))
    if method == "mf-multi":
        return AugmentedLwPredictor(_lw_from_json(model["low"]), _lw_from_json(model["high"])).predict(states)
    if states.ndim != 2 or states.shape[1] != len(STATE_COLUMNS):
        raise ValueError(f"query has {states.shape[-1]} features, simulation expects {len(STATE_COLUMNS)}")
    table = PredictionTable(states, n_samples, Fidelity.HIGH, config.decision, seed)
    if method == "mb-bayes":
        grid = WeightGrid(model["w1_values"], model["w2_values"])
        posterior = WeightPosterior(grid, np.asarray(model["probabilities"], dtype=float))
        return predict_bayes(states, posterior, cutoff=config.bayes_cutoff, table=table)
    return predict_map(states, UtilityWeights(model["w1"], model["w2"]), table=table)


def cmd_predict(args) -> int:
    model = load_model(args.model)
    states = read_query_states(args.input)
    predicted = predict_with_model(model, states, args.seed, args.n_samples)
    lines = ["a1,a2"] + [f"{float(a)!r},{float(b)!r}" for a, b in predicted]
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {len(predicted)} predictions to {args.out}")
    if args.score:
        ds = load_dataset(args.input)
        print(f"test error {test_error(predicted, ds.actions)!r}")
    return 0


# -- lower-bound ----------------------------------------------------------------

def cmd_lower_bound(args) -> int:
    config = _config(args, ())
    ds = load_dataset(_existing(args.input))
    n_samples = config.n_samples if args.n_samples is None else args.n_samples
    bound = lower_bound(ds.states, ds.actions, UtilityWeights(args.w1, args.w2), config.decision,
                        args.seed, n_samples)
    if args.out:
        Path(args.out).write_text(f"lower_bound\n{bound!r}\n")
    print(repr(bound))
    return 0


# -- parser ---------------------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pilotfusion", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("experiment", help="run the predictive-efficiency experiment")
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--scenario", choices=sorted(SCENARIOS))
    p.add_argument("--lofi", type=int, help="low-fidelity training-set size (e.g. 100 or 1000)")
    p.add_argument("--hifi", type=int, nargs="+", help="high-fidelity sample counts")
    p.add_argument("--replicates", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--cache-dir", dest="cache_dir", help="density-family cache directory")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("density", help="write the joint-action density grid of one weight setting")
    _add_config_flags(p)
    p.add_argument("--w1", type=float, required=True)
    p.add_argument("--w2", type=float, required=True)
    p.add_argument("--fidelity", choices=[f.value for f in Fidelity], default="high")
    p.add_argument("--seed", type=int, help="master seed selecting the novel encounters")
    p.add_argument("--out", required=True, help="CSV with columns a1_deg,a2_deg,density")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("gen-data", help="generate a dataset file")
    _add_config_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--fidelity", choices=[f.value for f in Fidelity], required=True)
    p.add_argument("--w1", type=float, required=True)
    p.add_argument("--w2", type=float, required=True)
    p.add_argument("--bearings", choices=sorted(BEARINGS), default="train")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("fit", help="fit a predictor and save it as JSON")
    _add_config_flags(p)
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--hifi", required=True, help="high-fidelity training dataset")
    p.add_argument("--lofi", help="low-fidelity training dataset")
    p.add_argument("--seed", type=int, help="master seed for the density families")
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--out", required=True, help="model JSON file")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict joint actions with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True,
                   help="dataset file, or CSV of encounter features with a header row")
    p.add_argument("--out", required=True, help="CSV with columns a1,a2")
    p.add_argument("--seed", type=int, default=0, help="seed of the simulated replays")
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--score", action="store_true", help="also print the test error (dataset input)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("lower-bound", help="ground-truth model error on a test dataset")
    _add_config_flags(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--w1", type=float, required=True)
    p.add_argument("--w2", type=float, required=True)
    p.add_argument("--seed", type=int, default=0, help="seed of the simulated replays")
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_lower_bound)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, OSError, ValueError, KeyError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"pilotfusion {args.command}: error: {message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
