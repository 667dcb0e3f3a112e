"""Command-line front end: ``gazewalk {simulate,saliency,fit,envelope,ci}``.

Every command reads an optional JSON config, lets flags override it, fills
in defaults and writes the resolved config next to its outputs together with
a manifest of output checksums. Feeding the resolved config back with
``--config`` reproduces the outputs byte for byte.

Exit codes: 0 success, 2 configuration or validation error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys

import jsonschema
import numpy as np

from . import __version__
from .core import (
    FixationSequence,
    GazeWalkError,
    ModelSpec,
    NoAuxiliaryData,
    RngSpec,
    Window,
    read_sequences_csv,
    write_sequences_csv,
)
from .heterogeneity import constant_map, estimate_saliency, load_raster, save_raster
from .inference import (
    bootstrap_ci,
    default_interaction_grid,
    default_kappa_grid,
    default_sigma_grid,
    fit_profile,
    fit_table1,
)
from .quadrature import QuadratureGrid
from .simulate import SYNTHETIC_START, SimulationConfig, simulate_batch, synthetic_model
from .summaries import Statistic, band_exceedance, envelope, plot_svg, write_band_csv, write_curve_csv

EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT1 = {"type": "integer", "minimum": 1}
_NUMS = {"type": "array", "items": _NUM, "minItems": 1}
_POINT = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_FAMILIES = ["binomial", "random_walk", "rejection_hull", "rejection_ball",
             "rejection_recurrence", "history_adapted"]


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


CONFIG_SCHEMA = _obj({
    "window": {"type": "array", "items": _NUM, "minItems": 4, "maxItems": 4},
    "seed": {"type": "integer", "minimum": 0},
    "data": {"type": "string"},
    "subject": {"type": "string"},
    "n_use": _INT1,
    "saliency": {"oneOf": [
        _obj({"type": {"const": "constant"}}, ["type"]),
        _obj({"type": {"const": "raster"}, "path": {"type": "string"}}, ["type", "path"]),
        _obj({"type": {"const": "estimate"}, "aux": {"type": "string"},
              "bandwidth": {"oneOf": [_POS, {"type": "null"}]},
              "nx": {"type": "integer", "minimum": 2}, "ny": {"type": "integer", "minimum": 2},
              "exclude_subject": {"oneOf": [{"type": "string"}, {"type": "null"}]}},
             ["type", "aux"]),
    ]},
    "quadrature": _obj({"nx": {"type": "integer", "minimum": 16}, "ny": {"type": "integer", "minimum": 16},
                        "supersample": _INT1}),
    "model": _obj({"family": {"enum": _FAMILIES}, "sigma2": _POS,
                   "rho": {"type": "number", "minimum": 0, "maximum": 1},
                   "theta": {"type": "number", "minimum": 0, "maximum": 1},
                   "r": _POS, "tau": _POS, "kappa": {"type": "number", "minimum": 0},
                   "coverage": {"enum": ["hull", "ball"]}, "flat": {"type": "boolean"}},
                  ["family"]),
    "fit": _obj({"model": {"type": "integer", "minimum": 1, "maximum": 4},
                 "family": {"enum": ["rejection_hull", "rejection_ball", "rejection_recurrence",
                                     "history_adapted"]},
                 "sigma_grid": _NUMS, "interaction_grid": _NUMS, "max_iter": _INT1,
                 "r": _POS, "coverage": {"enum": ["hull", "ball"]}, "flat": {"type": "boolean"}}),
    "simulate": _obj({"n": _INT1, "M": _INT1, "synthetic": {"enum": list("abcdefghi")},
                      "first_points": {"type": "array", "items": _POINT}}),
    "envelope": _obj({"M": {"type": "integer", "minimum": 2}, "radius_ball": _POS,
                      "radius_recurrence": _POS, "condition_on": {"type": "integer", "minimum": 0},
                      "quantiles": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1},
                                    "minItems": 2, "maxItems": 2}}),
    "bootstrap": _obj({"B": {"type": "integer", "minimum": 2},
                       "level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}}),
})


class ConfigError(Exception):
    pass


# -- config handling -------------------------------------------------------------


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None


def _abspath(cfg, *keys):
    d = cfg
    for k in keys[:-1]:
        d = d.get(k)
        if not isinstance(d, dict):
            return
    if isinstance(d.get(keys[-1]), str):
        d[keys[-1]] = os.path.abspath(d[keys[-1]])


def _window(cfg) -> Window:
    try:
        return Window(*cfg.get("window", [0.0, 1.0, 0.0, 1.0]))
    except GazeWalkError as exc:
        raise ConfigError(f"bad window: {exc}") from None


def _require_seed(cfg):
    if "seed" not in cfg:
        raise ConfigError("this command is randomised; pass --seed (or set 'seed' in the config)")
    return int(cfg["seed"])


def _saliency(cfg, w: Window):
    s = cfg.setdefault("saliency", {"type": "constant"})
    if s["type"] == "constant":
        return constant_map(w)
    if s["type"] == "raster":
        return load_raster(s["path"], w)
    aux = read_sequences_csv(s["aux"], w)
    excl = s.get("exclude_subject")
    seqs = [q for subj, q in aux.items() if subj != excl]
    if not seqs:
        raise NoAuxiliaryData(f"no auxiliary fixations left after excluding {excl!r}")
    return estimate_saliency(seqs, s.get("bandwidth"), w, s.get("nx"), s.get("ny"))


def _quad(cfg, w, amap) -> QuadratureGrid:
    q = cfg.get("quadrature", {})
    return QuadratureGrid(w, q.get("nx"), q.get("ny"), amap, q.get("supersample", 16))


def _data(cfg, w) -> FixationSequence:
    if "data" not in cfg:
        raise ConfigError("no data CSV given (--data)")
    seqs = read_sequences_csv(cfg["data"], w)
    if not seqs:
        raise ConfigError(f"{cfg['data']} holds no fixations")
    subj = cfg.get("subject")
    if subj is None:
        if len(seqs) != 1:
            raise ConfigError(f"data holds {len(seqs)} subjects; choose one with --subject")
        seq = next(iter(seqs.values()))
        cfg["subject"] = seq.subject
    elif subj not in seqs:
        raise ConfigError(f"subject {subj!r} not in {cfg['data']}")
    else:
        seq = seqs[subj]
    if "n_use" in cfg:
        seq = seq.head(min(cfg["n_use"], len(seq)))
    return seq


def _model(cfg) -> ModelSpec:
    m = dict(cfg["model"])
    try:
        return ModelSpec(**m)
    except GazeWalkError as exc:
        raise ConfigError(f"bad model: {exc}") from None


def _default_radii(w: Window):
    return (0.1, 0.1) if max(w.width, w.height) < 100 else (35.0, 50.0)


def _resolve_fit(cfg, w):
    f = cfg.setdefault("fit", {})
    if "model" in f and "family" in f and f["family"] != "rejection_recurrence":
        raise ConfigError("--model selects a recurrence submodel; it cannot be combined with another family")
    if "model" not in f and "family" not in f:
        f["model"] = 4
    family = "rejection_recurrence" if "model" in f else f["family"]
    adapted = family == "history_adapted"
    if "sigma_grid" not in f:
        g = default_sigma_grid(w)
        f["sigma_grid"] = [v * v for v in g] if adapted else g
    if "interaction_grid" not in f:
        f["interaction_grid"] = default_kappa_grid() if adapted else default_interaction_grid()
    f.setdefault("max_iter", 10)
    needs_r = family in ("rejection_ball", "rejection_recurrence") or (
        adapted and f.get("coverage") == "ball")
    if needs_r:
        f.setdefault("r", _default_radii(w)[1])
    if "model" not in f and family != "history_adapted":
        f.setdefault("flat", False)
    if adapted:
        f.setdefault("coverage", "hull")
    return f


def _run_fit(f, seq, quad):
    if "model" in f:
        return fit_table1(seq, f["model"], f["sigma_grid"], f["interaction_grid"], None, quad,
                          f.get("r"), f["max_iter"])
    kw = {"coverage": f["coverage"]} if f["family"] == "history_adapted" else {"flat": f.get("flat", False)}
    return fit_profile(seq, f["family"], f["sigma_grid"], f["interaction_grid"], None, quad,
                       f["max_iter"], r=f.get("r"), **kw)


# -- output helpers ----------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _finish(out, command, cfg, outputs) -> None:
    cfg_path = os.path.join(out, "config.resolved.json")
    write_json(cfg_path, cfg)
    manifest = {
        "command": command,
        "version": __version__,
        "config": "config.resolved.json",
        "rerun": f"gazewalk {command} --config config.resolved.json --out <dir>",
        "outputs": {os.path.basename(p): _sha256(p) for p in outputs},
    }
    write_json(os.path.join(out, "manifest.json"), manifest)


# -- commands -----------------------------------------------------------------------


def cmd_simulate(cfg, out, threads):
    sim = cfg.setdefault("simulate", {})
    seed = _require_seed(cfg)
    if "synthetic" in sim:
        cfg.setdefault("window", [0.0, 1.0, 0.0, 1.0])
        cfg.setdefault("model", {k: v for k, v in synthetic_model(sim["synthetic"]).to_dict().items()
                                 if v is not None})
        sim.setdefault("first_points", [list(SYNTHETIC_START)])
    if "model" not in cfg:
        raise ConfigError("simulate needs a 'model' section or a synthetic model name")
    w = _window(cfg)
    cfg["window"] = w.as_list()
    sim.setdefault("n", 100)
    sim.setdefault("M", 1)
    spec = _model(cfg)
    amap = _saliency(cfg, w)
    yield  # configuration done
    sc = SimulationConfig(sim["n"], spec, amap, RngSpec(seed), sim.get("first_points"))
    seqs = simulate_batch(sc, sim["M"], threads)
    paths = []
    for i, s in enumerate(seqs):
        p = os.path.join(out, f"sequence_{i:03d}.csv")
        write_sequences_csv(p, [FixationSequence(s.points, w, f"sim{i:03d}")])
        paths.append(p)
    _finish(out, "simulate", cfg, paths)


def cmd_saliency(cfg, out, threads):
    w = _window(cfg)
    cfg["window"] = w.as_list()
    s = cfg.get("saliency")
    if not s or s.get("type") != "estimate":
        raise ConfigError("saliency needs an auxiliary CSV (--aux)")
    s.setdefault("bandwidth", None)
    s.setdefault("exclude_subject", None)
    amap = _saliency(cfg, w)
    yield
    p = os.path.join(out, "saliency.json")
    save_raster(amap, p)
    _finish(out, "saliency", cfg, [p])


def cmd_fit(cfg, out, threads):
    w = _window(cfg)
    cfg["window"] = w.as_list()
    seq = _data(cfg, w)
    amap = _saliency(cfg, w)
    quad = _quad(cfg, w, amap)
    f = _resolve_fit(cfg, w)
    yield
    res = _run_fit(f, seq, quad)
    p = os.path.join(out, "fit.json")
    write_json(p, res.to_dict())
    _finish(out, "fit", cfg, [p])


def cmd_envelope(cfg, out, threads):
    w = _window(cfg)
    cfg["window"] = w.as_list()
    seed = _require_seed(cfg)
    seq = _data(cfg, w)
    amap = _saliency(cfg, w)
    env = cfg.setdefault("envelope", {})
    rb, rr = _default_radii(w)
    env.setdefault("M", 99)
    env.setdefault("radius_ball", rb)
    env.setdefault("radius_recurrence", rr)
    env.setdefault("condition_on", 2)
    if "model" not in cfg and "fit" not in cfg:
        raise ConfigError("envelope needs model parameters ('model') or a fit request ('fit')")
    if "model" in cfg:
        spec = _model(cfg)
        f = None
    else:
        f = _resolve_fit(cfg, w)
    quad = _quad(cfg, w, amap) if f is not None else None
    yield
    outputs = []
    if f is not None:
        res = _run_fit(f, seq, quad)
        spec = res.model_spec()
        p = os.path.join(out, "fit.json")
        write_json(p, res.to_dict())
        outputs.append(p)
    first = seq.points[: min(env["condition_on"], len(seq))] if env["condition_on"] else None
    sc = SimulationConfig(len(seq), spec, amap, RngSpec(seed), first)
    stats = [Statistic.ball_coverage(env["radius_ball"], normalized=True),
             Statistic.hull_coverage(normalized=True),
             Statistic.scanpath_length(),
             Statistic.cumulative_recurrence(env["radius_recurrence"])]
    q = tuple(env["quantiles"]) if "quantiles" in env else None
    report = {}
    for st in stats:
        curve = st.compute(seq)
        band = envelope(sc, st, env["M"], q, threads)
        frac, first_exit = band_exceedance(curve, band)
        report[st.kind] = {"statistic": st.label, "exceedance": frac, "first_exit": first_exit,
                           "M": band.M}
        cp = os.path.join(out, f"curve_{st.kind}.csv")
        bp = os.path.join(out, f"band_{st.kind}.csv")
        write_curve_csv(cp, curve)
        write_band_csv(bp, band)
        plot_svg(os.path.join(out, f"plot_{st.kind}.svg"), [curve], band, st.label)
        outputs += [cp, bp]
    rp = os.path.join(out, "exceedance.json")
    write_json(rp, report)
    outputs.append(rp)
    _finish(out, "envelope", cfg, outputs)


def cmd_ci(cfg, out, threads):
    w = _window(cfg)
    cfg["window"] = w.as_list()
    seed = _require_seed(cfg)
    seq = _data(cfg, w)
    amap = _saliency(cfg, w)
    quad = _quad(cfg, w, amap)
    f = _resolve_fit(cfg, w)
    b = cfg.setdefault("bootstrap", {})
    b.setdefault("B", 20)
    b.setdefault("level", 0.9)
    yield
    res = _run_fit(f, seq, quad)
    ci = bootstrap_ci(seq, res, b["B"], b["level"], RngSpec(seed), quad, max_iter=f["max_iter"],
                      workers=threads)
    fp = os.path.join(out, "fit.json")
    cp = os.path.join(out, "ci.json")
    write_json(fp, res.to_dict())
    doc = ci.to_dict()
    doc["estimates"] = res.estimates
    write_json(cp, doc)
    _finish(out, "ci", cfg, [fp, cp])


COMMANDS = {
    "simulate": cmd_simulate,
    "saliency": cmd_saliency,
    "fit": cmd_fit,
    "envelope": cmd_envelope,
    "ci": cmd_ci,
}


# -- argument parsing ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gazewalk", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gazewalk {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seeded=False, data=False):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
        sp.add_argument("--window", type=float, nargs=4, metavar=("A", "B", "C", "D"))
        sp.add_argument("--saliency", help="saliency raster file (default: constant)")
        if seeded:
            sp.add_argument("--seed", type=int, help="master random seed (required)")
        if data:
            sp.add_argument("--data", help="fixation CSV (subject,order,x,y[,t_ms])")
            sp.add_argument("--subject")
            sp.add_argument("--n-use", type=int, dest="n_use", help="use only the first N fixations")
            sp.add_argument("--quad", type=int, nargs=2, metavar=("NX", "NY"))

    def fitting(sp):
        sp.add_argument("--model", type=int, choices=[1, 2, 3, 4],
                        help="recurrence submodel: 1 none, 2 kernel, 3 recurrence, 4 both")
        sp.add_argument("--family", choices=["rejection_hull", "rejection_ball",
                                             "rejection_recurrence", "history_adapted"])
        sp.add_argument("--sigma-grid", type=float, nargs="+", dest="sigma_grid")
        sp.add_argument("--interaction-grid", type=float, nargs="+", dest="interaction_grid")
        sp.add_argument("--radius", type=float, help="recurrence / ball radius")
        sp.add_argument("--max-iter", type=int, dest="max_iter")

    s = sub.add_parser("simulate", help="simulate sequences from a model")
    common(s, seeded=True)
    s.add_argument("--synthetic", choices=list("abcdefghi"), help="one of the nine unit-square models")
    s.add_argument("-n", type=int, help="points per sequence")
    s.add_argument("-M", type=int, help="number of sequences")

    s = sub.add_parser("saliency", help="estimate a saliency raster from auxiliary fixations")
    common(s)
    s.add_argument("--aux", help="auxiliary fixation CSV")
    s.add_argument("--bandwidth", type=float)
    s.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"))
    s.add_argument("--exclude-subject", dest="exclude_subject")

    s = sub.add_parser("fit", help="fit a model by profile likelihood on grids")
    common(s, data=True)
    fitting(s)

    s = sub.add_parser("envelope", help="summary curves of the data against simulated envelopes")
    common(s, seeded=True, data=True)
    fitting(s)
    s.add_argument("--fit", action="store_true", help="fit the model inline")
    s.add_argument("-M", type=int, help="number of simulations (default 99)")

    s = sub.add_parser("ci", help="parametric bootstrap confidence intervals")
    common(s, seeded=True, data=True)
    fitting(s)
    s.add_argument("-B", type=int, help="bootstrap replicates (default 20)")
    s.add_argument("--level", type=float, help="confidence level (default 0.9)")
    return p


def apply_flags(cfg: dict, args) -> dict:
    cfg = copy.deepcopy(cfg)
    a = vars(args)

    def put(key, value, section=None):
        if value is None:
            return
        d = cfg if section is None else cfg.setdefault(section, {})
        d[key] = value

    put("window", a.get("window"))
    put("seed", a.get("seed"))
    put("data", a.get("data"))
    put("subject", a.get("subject"))
    put("n_use", a.get("n_use"))
    if a.get("saliency"):
        cfg["saliency"] = {"type": "raster", "path": a["saliency"]}
    if a.get("quad"):
        q = cfg.setdefault("quadrature", {})
        q["nx"], q["ny"] = a["quad"]
    cmd = a["command"]
    if cmd == "simulate":
        put("synthetic", a.get("synthetic"), "simulate")
        put("n", a.get("n"), "simulate")
        put("M", a.get("M"), "simulate")
    if cmd == "saliency":
        if a.get("aux"):
            s = cfg.get("saliency")
            if not s or s.get("type") != "estimate":
                cfg["saliency"] = s = {"type": "estimate"}
            s["aux"] = a["aux"]
        s = cfg.get("saliency", {})
        if s.get("type") == "estimate":
            put("bandwidth", a.get("bandwidth"), "saliency")
            put("exclude_subject", a.get("exclude_subject"), "saliency")
            if a.get("grid"):
                s["nx"], s["ny"] = a["grid"]
    if cmd in ("fit", "envelope", "ci"):
        fit_flags = {k: a.get(k) for k in ("model", "family", "sigma_grid", "interaction_grid", "max_iter")}
        fit_flags["r"] = a.get("radius")
        wants_fit = cmd != "envelope" or a.get("fit") or any(v is not None for v in fit_flags.values())
        if wants_fit:
            f = cfg.setdefault("fit", {})
            for k, v in fit_flags.items():
                if v is not None:
                    f[k] = v
            if a.get("model") is not None:
                f.pop("family", None)
            elif a.get("family") is not None:
                f.pop("model", None)
    if cmd == "envelope":
        put("M", a.get("M"), "envelope")
    if cmd == "ci":
        put("B", a.get("B"), "bootstrap")
        put("level", a.get("level"), "bootstrap")
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = apply_flags(load_config(args.config), args)
        validate_config(cfg)
        for key in ("data",):
            _abspath(cfg, key)
        _abspath(cfg, "saliency", "path")
        _abspath(cfg, "saliency", "aux")
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        os.makedirs(args.out, exist_ok=True)
        steps = COMMANDS[args.command](cfg, args.out, args.threads)
        try:
            next(steps)
        except GazeWalkError as exc:
            raise ConfigError(f"{type(exc).__name__}: {exc}") from None
        except OSError as exc:
            raise ConfigError(str(exc)) from None
        validate_config(cfg)
    except ConfigError as exc:
        print(f"gazewalk {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        for _ in steps:
            pass
    except (GazeWalkError, ArithmeticError, OSError) as exc:
        print(f"gazewalk {args.command}: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
