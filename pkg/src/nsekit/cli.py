"""Command-line front end.

Each command reads its parameter block from an optional JSON config (the
``--config`` flag, or the ``NSEKIT_CONFIG`` environment variable), then
applies command-line flags on top. Unknown keys are rejected before any
computation. Exit codes: 0 success, 1 acceptance bands missed (``simulate``),
2 invalid input, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .activations import (
    ActivationSpec,
    appendix_c_table,
    construct_beta3,
    construct_beta4,
    from_hermite_basis,
    get_activation,
    information_exponent,
    nse,
)
from .errors import NseKitError, ValidationError
from .output import write_csv

CONFIG_ENV = "NSEKIT_CONFIG"
BANDS_MISSED = 1

# Allowed keys and defaults per command; the config file may only use these.
DEFAULTS: dict[str, dict] = {
    "nse": {"activation": None, "coeffs": None, "params": {}, "strict": False, "json": None},
    "curve-single-index": {
        "activation": None, "coeffs": None, "params": {}, "lambdas": "geom:1e-4:1:9",
        "it": False, "tol": 1e-9, "out": "curve.csv",
    },
    "committee": {
        "activation": None, "coeffs": None, "params": {}, "noise": 1.0, "p": "1..64",
        "alpha_over_p": 10.0, "width": 1000, "q0": 1e-3, "h0": 1.0, "t_max": 100000,
        "grid": "lin:0.40:0.60:0.02", "eps": 1e-3, "out": None,
    },
    "hierarchical": {
        "activation": "he2n", "coeffs": None, "params": {}, "gamma": 1.0, "noise": 1.0,
        "width": 1000000, "ks": "8,11,16,23,32,45,64", "alphas": "geom:1e2:1e6:9",
        "mode": "oracle", "out": "hierarchical.csv",
    },
    "appendix-c": {"m": "1..10", "out": None},
    "construct": {"root": "positive", "plus_degree": 4, "max_degree": 20, "out": None},
    "simulate": {
        "activation": "he2n", "coeffs": None, "params": {}, "model": "single-index", "d": 2000,
        "snr": 1.0, "width": 1, "noise": 1.0, "gamma": 1.0, "seed": 0, "repetitions": 5,
        "preprocessing": "conditional", "alpha_factors": [0.3, 0.5, 0.7, 1.0, 1.4, 2.0, 3.0, 5.0],
        "alphas": None, "bands": {"transition_factor": 2.0, "below_half": 0.15, "above_five": 0.5},
        "out": "sweep.csv",
    },
}


# ---------------------------------------------------------------------------
# parsing helpers


def parse_grid(text) -> list[float]:
    """``geom:lo:hi:n``, ``lin:lo:hi:step``, ``a..b`` (integers) or a comma list."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    try:
        if text.startswith("geom:"):
            lo, hi, n = text[5:].split(":")
            return [float(v) for v in np.geomspace(float(lo), float(hi), int(n))]
        if text.startswith("lin:"):
            lo, hi, step = (float(v) for v in text[4:].split(":"))
            count = int(math.floor((hi - lo) / step + 1e-9)) + 1
            return [round(lo + i * step, 12) for i in range(count)]
        if ".." in text:
            lo, hi = text.split("..")
            return [float(v) for v in range(int(lo), int(hi) + 1)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse grid {text!r}") from None


def parse_ints(text) -> list[int]:
    values = parse_grid(text)
    if any(v != int(v) for v in values):
        raise ValidationError(f"expected integers, got {text!r}")
    return [int(v) for v in values]


def load_activation(block: dict) -> ActivationSpec:
    """Registry name (with ``params``) or a coefficient file.

    The file holds Hermite-basis coefficients, either a bare list or an object
    with a ``basis`` list.
    """
    if block.get("coeffs"):
        path = Path(block["coeffs"])
        data = json.loads(path.read_text())
        basis = data["basis"] if isinstance(data, dict) else data
        return from_hermite_basis(basis, name=data.get("name") if isinstance(data, dict) else None)
    name = block.get("activation")
    if not name:
        raise ValidationError("no activation given (name or --coeffs file)")
    return get_activation(name, **(block.get("params") or {}))


def load_config(path: str | None) -> dict:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object keyed by command")
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise ValidationError(f"unknown config sections: {sorted(unknown)}")
    for section, block in data.items():
        bad = set(block) - set(DEFAULTS[section])
        if bad:
            raise ValidationError(f"unknown keys in [{section}]: {sorted(bad)}")
    return data


def resolve(command: str, config: dict, args: argparse.Namespace) -> dict:
    block = dict(DEFAULTS[command])
    block.update(config.get(command, {}))
    for key in DEFAULTS[command]:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            block[key] = value
    return block


@contextmanager
def _pool(jobs: int):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            yield pool.map
    else:
        yield map


def _say(text: str = ""):
    print(text)


# ---------------------------------------------------------------------------
# commands


def cmd_nse(block, args) -> int:
    spec = load_activation(block)
    res = nse(spec)
    ie = information_exponent(spec)
    _say(f"activation: {spec.label}")
    _say(f"beta_star: {res.beta_star if res.beta_star is not None else f'>{res.beta_cap}'}")
    for i, mu in enumerate(res.mu, 1):
        _say(f"mu_{i}: {mu:.16e}")
    _say(f"information_exponent: {ie}")
    if block.get("json"):
        payload = {"activation": spec.label, "beta_star": res.beta_star, "mu": list(res.mu),
                   "information_exponent": ie, "cap_exceeded": res.cap_exceeded, "zero_tol": res.zero_tol}
        Path(block["json"]).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if res.cap_exceeded and block.get("strict"):
        return 3
    return 0


def cmd_curve_single_index(block, args) -> int:
    from .single_index import alg_asymptote, threshold_curve

    spec = load_activation(block)
    snrs = parse_grid(block["lambdas"])
    if not snrs or any(not 0 < s <= 10 for s in snrs):
        raise ValidationError("snr grid must lie in (0, 10]")
    with _pool(args.jobs) as map_fn:
        curve = threshold_curve(spec, snrs, with_it=bool(block["it"]), tol=float(block["tol"]), map_fn=map_fn)
    extra = {"slope_alg": curve.slope("alg")}
    try:
        beta, const = alg_asymptote(spec)
        extra["asymptote"] = {"beta_star": beta, "constant": const}
    except NseKitError as exc:
        extra["asymptote"] = {"unavailable": str(exc)}
    if block["it"]:
        extra["slope_it"] = curve.slope("it")
    out = write_csv(block["out"], curve.to_csv(), block, {"tol": block["tol"]}, extra)
    _say(f"wrote {out}")
    _say(f"log-log slope of alpha_alg: {extra['slope_alg']:.4f}")
    return 0


def cmd_committee(block, args) -> int:
    from . import committee as cm

    spec = load_activation(block)
    mode = args.mode
    if mode == "threshold":
        ps = parse_ints(block["p"])
        rows = ["p,alpha_alg,alpha_over_p"]
        for p in ps:
            a = cm.committee_alg_threshold(cm.CommitteeModel(spec, p, float(block["noise"])))
            rows.append(f"{p},{a:.16e},{a / p:.16e}")
            _say(f"p={p}  alpha/p={a / p:.6f}")
        text = "\n".join(rows) + "\n"
    elif mode == "se":
        model = cm.CommitteeModel(spec, int(block["width"]), float(block["noise"]))
        alpha = float(block["alpha_over_p"]) * model.width
        trace = cm.run_se(cm.CommitteeOrderParams(float(block["q0"]), float(block["h0"])), alpha, model,
                          t_max=int(block["t_max"]))
        _say(f"classification: {trace.classification}")
        if trace.note:
            _say(f"note: {trace.note}")
        text = trace.to_csv()
    elif mode == "specialization":
        model = cm.CommitteeModel(spec, int(block["width"]), float(block["noise"]))
        thr = cm.specialization_alg_threshold(spec)
        _say(f"predicted alpha/p: {thr.value if isinstance(thr, cm.Superlinear) else f'{thr:.6f}'}")
        rows = ["alpha_over_p,q_d,h,classification"]
        for ab in parse_grid(block["grid"]):
            trace = cm.run_se(cm.CommitteeOrderParams(float(block["q0"]), float(block["h0"])),
                              ab * model.width, model, t_max=int(block["t_max"]))
            fin = trace.final
            rows.append(f"{ab:.16e},{fin.q_d:.16e},{fin.h:.16e},{trace.classification}")
            _say(f"alpha/p={ab:g}  {trace.classification}")
        text = "\n".join(rows) + "\n"
    else:  # it-spec
        rows = ["alpha_over_p,eps,specialized_beats_unspecialized"]
        for ab in parse_grid(block["grid"]):
            verdict = cm.it_specialization_check(ab, float(block["eps"]), spec)
            rows.append(f"{ab:.16e},{float(block['eps']):.16e},{str(verdict).lower()}")
            _say(f"alpha/p={ab:g}  {verdict}")
        text = "\n".join(rows) + "\n"
    if block.get("out"):
        _say(f"wrote {write_csv(block['out'], text, {'mode': mode, **block})}")
    return 0


def cmd_hierarchical(block, args) -> int:
    from .hierarchical import HierarchicalModel, feature_thresholds, mse_gamma_envelopes

    spec = load_activation(block)
    model = HierarchicalModel(spec, float(block["gamma"]), float(block["noise"]), int(block["width"]))
    ks = parse_ints(block["ks"])
    ft = feature_thresholds(ks, model, block["mode"])
    mse = mse_gamma_envelopes(parse_grid(block["alphas"]), model, block["mode"])
    slope_k = ft.slope()
    beta = nse(spec).beta_star
    extra = {
        "threshold_slope": slope_k,
        "threshold_slope_target": 2 * model.gamma * beta if beta else None,
        "mse_slopes": mse.slopes,
        "mse_slope_target": -(1 / beta) * (1 - 1 / (2 * model.gamma)) if beta else None,
    }
    out = Path(block["out"])
    write_csv(out, ft.to_csv(), block, {}, extra)
    write_csv(out.with_name(out.stem + "_mse.csv"), mse.to_csv(), block, {}, extra)
    _say(f"threshold slope over k: {slope_k:.4f}")
    _say(f"computational MSE slope: {mse.slopes['computational']:.4f}")
    return 0


def cmd_appendix_c(block, args) -> int:
    ms = parse_ints(block["m"])
    if any(m > 14 for m in ms):
        raise ValidationError("m must be at most 14")
    rows = appendix_c_table(ms)
    lines = ["m,min_eig_full,min_eig_he2_free,positive_definite"]
    for r in rows:
        block_eig = r["min_eig_he2_free"]
        lines.append(f"{r['m']},{r['min_eig_full']:.16e},{'' if block_eig is None else f'{block_eig:.16e}'},"
                     f"{str(r['positive_definite']).lower()}")
        shown = "-" if block_eig is None else f"{block_eig:.6g}"
        _say(f"m={r['m']:2d}  min eig {r['min_eig_full']:.6g}  He2-free block {shown}"
             f"  {'positive definite' if r['positive_definite'] else 'indefinite'}")
    first_bad = next((r["m"] for r in rows if not r["positive_definite"]), None)
    if first_bad is not None:
        _say(f"first indefinite block at m={first_bad}")
    if block.get("out"):
        write_csv(block["out"], "\n".join(lines) + "\n", block)
    return 0


def cmd_construct(block, args) -> int:
    if args.which == "beta3":
        spec = construct_beta3(block["root"], int(block["plus_degree"]), int(block["max_degree"]))
    else:
        spec = construct_beta4()
    res = nse(spec)
    _say(f"{args.which}: degree {spec.degree}, beta_star {res.beta_star}")
    for i, mu in enumerate(res.mu, 1):
        _say(f"mu_{i}: {mu:.6e}")
    if block.get("out"):
        payload = {"name": args.which, "basis": list(spec.basis), "beta_star": res.beta_star, "mu": list(res.mu)}
        Path(block["out"]).write_text(json.dumps(payload, indent=2) + "\n")
        _say(f"wrote {block['out']}")
    return 0


def cmd_simulate(block, args) -> int:
    from .simulator import ExperimentConfig, transition_sweep
    from .single_index import SingleIndexModel, alg_threshold

    spec = load_activation(block)
    template = ExperimentConfig(
        spec, model=block["model"], d=int(block["d"]), seed=int(block["seed"]),
        preprocessing=block["preprocessing"], repetitions=int(block["repetitions"]),
        snr=float(block["snr"]), width=int(block["width"]), noise=float(block["noise"]),
        gamma=float(block["gamma"]),
    )
    predicted = None
    if block["model"] == "single-index":
        predicted = alg_threshold(SingleIndexModel(spec, template.snr))
    if block.get("alphas"):
        grid = parse_grid(block["alphas"])
    elif predicted is not None:
        grid = [f * predicted for f in block["alpha_factors"]]
    else:
        raise ValidationError("give an explicit alpha grid for committee and hierarchical sweeps")
    sweep = transition_sweep(template, grid, jobs=args.jobs)
    for r in sweep.reports:
        _say(f"alpha={r.alpha:.4f}  overlap={r.mean[0]:.4f} +- {r.stderr[0]:.4f}")
    verdicts = {}
    if predicted is not None:
        bands = block["bands"]
        alphas, means = sweep.alphas, sweep.means
        tr = sweep.transition
        verdicts["transition"] = tr is not None and predicted / bands["transition_factor"] <= tr <= predicted * bands["transition_factor"]
        below = means[alphas <= 0.5 * predicted * (1 + 1e-9)]
        above = means[alphas >= 5 * predicted * (1 - 1e-9)]
        verdicts["below_half"] = bool(below.size) and bool(np.all(below < bands["below_half"]))
        verdicts["above_five"] = bool(above.size) and bool(np.all(above > bands["above_five"]))
        _say(f"predicted threshold {predicted:.6f}, empirical transition {tr}")
        for k, v in verdicts.items():
            _say(f"{k}: {'pass' if v else 'FAIL'}")
    extra = {"predicted_threshold": predicted, "transition": sweep.transition, "null_level": sweep.null_level,
             "verdicts": verdicts}
    write_csv(block["out"], sweep.to_csv(), block, {}, extra)
    return 0 if all(verdicts.values()) else BANDS_MISSED


# ---------------------------------------------------------------------------
# argument parser


def _activation_flags(p):
    p.add_argument("--act", dest="activation", help="registry activation name")
    p.add_argument("--coeffs", help="JSON file of Hermite-basis coefficients")
    p.add_argument("--param", dest="param_pairs", action="append", default=[], metavar="KEY=VALUE",
                   help="activation parameter (for mix: a, b)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsekit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help=f"JSON config (default: ${CONFIG_ENV})")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("nse", help="noise sensitivity exponent of an activation")
    p.add_argument("activation", nargs="?")
    p.add_argument("--coeffs")
    p.add_argument("--param", dest="param_pairs", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--strict", action="store_true", help="exit 3 when no exponent is found below the cap")
    p.add_argument("--json")

    p = sub.add_parser("curve-single-index", help="alpha_alg (and alpha_it) over an snr grid")
    _activation_flags(p)
    p.add_argument("--lambdas")
    p.add_argument("--it", action="store_true")
    p.add_argument("--tol", type=float)
    p.add_argument("--out")

    p = sub.add_parser("committee", help="committee-machine thresholds and state evolution")
    p.add_argument("mode", choices=["threshold", "se", "specialization", "it-spec"])
    _activation_flags(p)
    p.add_argument("--noise", type=float)
    p.add_argument("--p")
    p.add_argument("--width", type=int)
    p.add_argument("--alpha-over-p", dest="alpha_over_p", type=float)
    p.add_argument("--q0", type=float)
    p.add_argument("--h0", type=float)
    p.add_argument("--t-max", dest="t_max", type=int)
    p.add_argument("--grid")
    p.add_argument("--eps", type=float)
    p.add_argument("--out")

    p = sub.add_parser("hierarchical", help="per-feature thresholds and weighted-error envelopes")
    _activation_flags(p)
    p.add_argument("--gamma", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--width", type=int)
    p.add_argument("--ks")
    p.add_argument("--alphas")
    p.add_argument("--mode", choices=["oracle", "self-noise"])
    p.add_argument("--out")

    p = sub.add_parser("appendix-c", help="eigenvalues of the triple-product matrix")
    p.add_argument("--m")
    p.add_argument("--out")

    p = sub.add_parser("construct", help="build exponent-3 or exponent-4 activations")
    p.add_argument("which", choices=["beta3", "beta4"])
    p.add_argument("--root", choices=["positive", "negative"])
    p.add_argument("--plus-degree", dest="plus_degree", type=int)
    p.add_argument("--max-degree", dest="max_degree", type=int)
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="finite-d spectral transition sweep")
    _activation_flags(p)
    p.add_argument("--d", type=int)
    p.add_argument("--snr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--preprocessing")
    p.add_argument("--alphas")
    p.add_argument("--out")
    return parser


def _params(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ValidationError(f"activation parameter must be KEY=VALUE, got {pair!r}")
        out[key] = float(value)
    return out


COMMANDS = {
    "nse": cmd_nse,
    "curve-single-index": cmd_curve_single_index,
    "committee": cmd_committee,
    "hierarchical": cmd_hierarchical,
    "appendix-c": cmd_appendix_c,
    "construct": cmd_construct,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.jobs < 1:
            raise ValidationError("--jobs must be at least 1")
        config = load_config(args.config)
        args.params = _params(getattr(args, "param_pairs", None)) or None
        block = resolve(args.command, config, args)
        return COMMANDS[args.command](block, args)
    except NseKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        where = getattr(exc, "filename", None)
        print(f"I/O error{f' ({where})' if where else ''}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
