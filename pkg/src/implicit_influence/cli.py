"""Command-line interface: ``implicit-influence <command> [options]``.

Commands
--------
simulate  write a synthetic instance (events, volumes, true influence)
fit       fit a model to an event log and volume series
predict   in-sample and next-step volume predictions
rank      per-contagion node rankings and influential-node selection
topics    turn a tweet corpus into topics, an event log and volumes
cv        time-split cross-validation over hyperparameter grids, then refit

Settings come from a flat ``key = value`` file (``--config``) and from
``--key value`` overrides, which win. Grid values for ``cv`` are given as
``grid_<param> = v1, v2, ...``. Every run writes ``metadata.json`` with the
resolved configuration. Outputs are staged in a temporary directory and moved
into ``--out`` only when the command succeeds.

Exit status is 0 on success, 2 on invalid input and 1 on any other failure.
"""

import argparse
import os
import shutil
import sys
import tempfile
import warnings
from importlib import resources

import numpy as np
from threadpoolctl import threadpool_limits

from . import files
from .baselines import LIMRegressor, MSLIMRegressor
from .copula import CopulaInfluenceRegressor
from .data import load_events, parse_events
from .evaluation import (
    CvPlan,
    cross_validate,
    influence_error,
    rank_nodes,
    select_influential,
    volume_mse,
)
from .synth import SynthConfig, gen_instance
from .topics import TopicExtractor, read_tweets

COMMANDS = ("simulate", "fit", "predict", "rank", "topics", "cv")
MODELS = ("lim", "mslim", "copula")


class ConfigError(ValueError):
    pass


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise ValueError("must be a positive integer")
    return value


def _float_or_auto(text):
    return "auto" if str(text).strip() == "auto" else float(text)


def _model(text):
    if text not in MODELS:
        raise ValueError(f"must be one of {', '.join(MODELS)}")
    return text


def _path(text):
    return os.fspath(text)


# key -> (parser, default); None defaults mean "use the library default"
KEYS = {
    "seed": (int, 0),
    "model": (_model, "copula"),
    "threads": (_positive_int, None),
    # synthetic instance
    "n_nodes": (_positive_int, None),
    "n_contagions": (_positive_int, None),
    "horizon": (_positive_int, None),
    "rank": (_positive_int, None),
    "noise_scale": (float, None),
    # shared model settings
    "lag": (_positive_int, 10),
    "init": (str, "ridge"),
    # copula model
    "lambda1": (float, None),
    "lambda2": (float, None),
    "lambda3": (float, None),
    "lambda4": (float, None),
    "lambda5": (float, None),
    "step": (_float_or_auto, None),
    "inner_tol": (float, None),
    "outer_tol": (float, None),
    "inner_max": (_positive_int, None),
    "outer_max": (_positive_int, None),
    # baselines
    "lam": (float, None),
    "gamma": (float, None),
    "tol": (float, None),
    "max_iter": (_positive_int, None),
    # input files
    "events": (_path, None),
    "volumes": (_path, None),
    "influence": (_path, None),
    "influence_true": (_path, None),
    "corpus": (_path, None),
    # predict / rank
    "steps": (_positive_int, 1),
    "avg_threshold": (float, 1.3),
    "max_threshold": (float, 1.8),
    # cross-validation
    "train_fraction": (float, 0.6),
    # topics
    "n_topics": (_positive_int, 10),
    "nmf_max_iter": (_positive_int, 500),
    "nmf_tol": (float, 1e-6),
    "min_df": (_positive_int, 3),
    "top_n": (_positive_int, 10),
}

FILE_KEYS = ("events", "volumes", "influence", "influence_true", "corpus")

MODEL_PARAMS = {
    "copula": ("lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "step",
               "inner_tol", "outer_tol", "inner_max", "outer_max", "init"),
    "mslim": ("lam", "gamma", "tol", "max_iter", "init"),
    "lim": ("tol", "max_iter"),
}


def _parse_value(key, text):
    if key.startswith("grid_"):
        param = key[len("grid_"):]
        if param not in KEYS:
            raise ConfigError(f"unknown grid parameter {param!r}")
        parser = KEYS[param][0]
        items = [s.strip() for s in str(text).split(",") if s.strip()]
        if not items:
            raise ConfigError(f"{key}: empty grid")
        try:
            return [parser(s) for s in items]
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    if key not in KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return KEYS[key][0](text)
    except ValueError as exc:
        raise ConfigError(f"{key} = {text!r}: {exc}") from None


def read_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    raw = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            raw[key.replace("-", "_")] = value
    return raw


def resolve_config(raw, base_dir="."):
    """Typed configuration from raw strings, with defaults filled in."""
    cfg = {k: default for k, (_, default) in KEYS.items()}
    for key, text in raw.items():
        cfg[key] = _parse_value(key, text)
    for key in FILE_KEYS:
        if cfg[key] is not None:
            path = cfg[key]
            if not os.path.isabs(path):
                path = os.path.normpath(os.path.join(base_dir, path))
            if not os.path.isfile(path):
                raise ConfigError(f"{key}: file not found: {path}")
            cfg[key] = path
    return cfg


def _split_overrides(tokens):
    raw = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) <= 2:
            raise ConfigError(f"unexpected argument {tok!r}")
        body = tok[2:]
        if "=" in body:
            key, value = body.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"missing value for {tok}")
            key, value = body, tokens[i + 1]
            i += 2
        raw[key.replace("-", "_")] = value
    return raw


def build_parser():
    parser = argparse.ArgumentParser(
        prog="implicit-influence",
        description="Influence estimation in implicit diffusion networks.",
        epilog="Any other setting can be given as --key value (see the docs).",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="flat key = value settings file")
    parser.add_argument("--seed", help="seed for all randomness")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--threads", help="cap on BLAS/OpenMP threads")
    parser.add_argument("--model", help="lim, mslim or copula")
    return parser


def _require(cfg, *keys):
    missing = [k for k in keys if cfg[k] is None]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join(missing)}")


def _estimator(cfg, model=None):
    model = model or cfg["model"]
    params = {k: cfg[k] for k in MODEL_PARAMS[model] if cfg[k] is not None}
    if model == "copula":
        return CopulaInfluenceRegressor(lag=cfg["lag"], random_state=cfg["seed"],
                                        **params)
    if model == "mslim":
        return MSLIMRegressor(lag=cfg["lag"], **params)
    return LIMRegressor(lag=cfg["lag"], **params)


def _load_data(cfg):
    _require(cfg, "events", "volumes")
    V = files.read_matrix(cfg["volumes"])
    with open(cfg["events"], encoding="utf-8") as fh:
        rows = parse_events(fh)
    if not rows:
        raise ConfigError(f"{cfg['events']}: no events")
    n_nodes = cfg["n_nodes"] or max(r[0] for r in rows)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        log = load_events(cfg["events"], n_nodes, V.shape[1], V.shape[0])
    return log, V


def _load_influence(cfg, log, V):
    if cfg["influence"] is not None:
        influence = files.read_matrix(cfg["influence"])
        if influence.shape != (log.n_nodes * cfg["lag"], log.n_contagions):
            raise ConfigError(
                f"influence has shape {influence.shape}, expected "
                f"{(log.n_nodes * cfg['lag'], log.n_contagions)}"
            )
        return influence, None
    est = _estimator(cfg).fit(log, V)
    return est.influence_, est


def _metrics(cfg, model, log, V, influence, hyperparams, mse_validation=None):
    est = _estimator(cfg, model)
    est.influence_ = influence
    report = {
        "model": model,
        "seed": cfg["seed"],
        "hyperparams": hyperparams,
        "mse_full": volume_mse(est.predict(log), V),
        "mse_validation": mse_validation,
    }
    if cfg["influence_true"] is not None:
        truth = files.read_matrix(cfg["influence_true"])
        report["influence_error"] = influence_error(influence, truth)
    return report


def _model_params(est):
    return {k: v for k, v in sorted(est.get_params().items())}


def _write_fit(out, cfg, est, log, V, mse_validation=None):
    files.write_matrix(os.path.join(out, "influence.csv"), est.influence_)
    info = {"model": cfg["model"]}
    if cfg["model"] == "copula":
        files.write_matrix(os.path.join(out, "precision.csv"), est.precision_)
        files.write_rows(os.path.join(out, "objective_trace.csv"),
                         ["iteration", "objective"],
                         [(0, float(est.fit_result_.initial_objective))]
                         + [(i, float(v)) for i, v in
                            enumerate(est.objective_trace_, start=1)])
        info.update(iterations=est.n_iter_, converged=est.converged_,
                    step=est.fit_result_.step)
    elif cfg["model"] == "mslim":
        info.update(iterations=est.n_iter_, converged=est.converged_,
                    objective=est.objective_)
    else:
        info.update(converged=est.converged_)
    metrics = _metrics(cfg, cfg["model"], log, V, est.influence_,
                       _model_params(est), mse_validation)
    files.write_json(os.path.join(out, "metrics.json"), metrics)
    return info


def cmd_simulate(cfg, out):
    kwargs = {k: cfg[k] for k in ("n_nodes", "n_contagions", "horizon", "rank",
                                  "noise_scale") if cfg[k] is not None}
    synth = SynthConfig(lag=cfg["lag"], seed=cfg["seed"], **kwargs)
    inst = gen_instance(synth)
    files.write_events(os.path.join(out, "events.csv"), inst.log)
    files.write_matrix(os.path.join(out, "volumes.csv"), inst.volumes.values)
    files.write_matrix(os.path.join(out, "influence_true.csv"), inst.influence)
    return {"synth": {"n_nodes": synth.n_nodes, "n_contagions": synth.n_contagions,
                      "lag": synth.lag, "horizon": synth.horizon,
                      "rank": synth.rank, "noise_scale": inst.noise_scale,
                      "n_events": inst.log.n_events}}


def cmd_fit(cfg, out):
    log, V = _load_data(cfg)
    est = _estimator(cfg).fit(log, V)
    return _write_fit(out, cfg, est, log, V)


def cmd_predict(cfg, out):
    log, V = _load_data(cfg)
    influence, _ = _load_influence(cfg, log, V)
    est = _estimator(cfg)
    est.influence_ = influence
    inside = est.predict(log)
    ahead = est.predict_next(log, cfg["steps"])
    T = log.horizon
    rows = [[t] + list(map(float, row))
            for t, row in enumerate(np.vstack([inside, ahead]), start=1)]
    header = ["time"] + [f"contagion_{k}" for k in range(1, log.n_contagions + 1)]
    files.write_rows(os.path.join(out, "predictions.csv"), header, rows)
    return {"in_sample_rows": T, "forecast_rows": cfg["steps"],
            "mse_full": volume_mse(inside, V)}


def cmd_rank(cfg, out):
    log, V = _load_data(cfg)
    influence, _ = _load_influence(cfg, log, V)
    scores = rank_nodes(influence, log.n_nodes)
    chosen = select_influential(scores, cfg["avg_threshold"], cfg["max_threshold"])
    rows = []
    for k in range(1, log.n_contagions + 1):
        for u in scores.per_contagion(k):
            rows.append((int(u), k, float(scores.block[u - 1, k - 1])))
    files.write_rows(os.path.join(out, "rankings.csv"),
                     ["node_id", "contagion_id", "score"], rows)
    files.write_rows(
        os.path.join(out, "nodes.csv"),
        ["node_id", "avg_score", "max_score", "selected"],
        [(u, float(scores.average[u - 1]), float(scores.maximum[u - 1]),
          int(u in chosen)) for u in range(1, log.n_nodes + 1)],
    )
    return {"selected": sorted(chosen)}


def bundled_corpus():
    """Path of the bundled 200-tweet synthetic corpus."""
    return str(resources.files(__package__).joinpath("data", "toy_tweets.csv"))


def cmd_topics(cfg, out):
    path = cfg["corpus"] or bundled_corpus()
    raw = read_tweets(path)
    extractor = TopicExtractor(n_topics=cfg["n_topics"], max_iter=cfg["nmf_max_iter"],
                               tol=cfg["nmf_tol"], min_df=cfg["min_df"],
                               random_state=cfg["seed"]).fit(raw)
    top = extractor.top_words(min(cfg["top_n"], len(extractor.vocabulary_)))
    with open(os.path.join(out, "topics.txt"), "w", encoding="utf-8") as fh:
        for k, words in enumerate(top, start=1):
            fh.write(f"topic {k}: {' '.join(words)}\n")
    tl = extractor.build_log()
    files.write_events(os.path.join(out, "events.csv"), tl.log)
    files.write_matrix(os.path.join(out, "volumes.csv"), tl.volumes.values)
    files.write_rows(os.path.join(out, "users.csv"), ["node_id", "username"],
                     [(i, u) for i, u in enumerate(tl.users, start=1)])
    return {"corpus": path, "documents": extractor.corpus_.n_documents,
            "dropped": extractor.corpus_.dropped,
            "vocabulary": len(extractor.vocabulary_), "users": len(tl.users),
            "days": tl.log.horizon, "start": tl.start,
            "nmf_iterations": extractor.model_.n_iter}


def cmd_cv(cfg, out, grids):
    log, V = _load_data(cfg)
    allowed = set(MODEL_PARAMS[cfg["model"]])
    for name in grids:
        if name not in allowed:
            raise ConfigError(f"grid_{name} is not a {cfg['model']} parameter")
    plan = CvPlan(grids=grids, train_fraction=cfg["train_fraction"])
    res = cross_validate(log, V, _estimator(cfg), plan)
    files.write_json(os.path.join(out, "cv_report.json"), {
        "model": cfg["model"],
        "train_rows": res.n_train,
        "validation_rows": log.horizon - res.n_train,
        "best_params": res.best_params,
        "best_score": res.best_score,
        "scores": [{"params": p, "mse_validation": s} for p, s in res.scores],
    })
    info = _write_fit(out, cfg, res.estimator, log, V, mse_validation=res.best_score)
    info["best_params"] = res.best_params
    return info


def _run(command, cfg, grids, out):
    if command == "simulate":
        return cmd_simulate(cfg, out)
    if command == "fit":
        return cmd_fit(cfg, out)
    if command == "predict":
        return cmd_predict(cfg, out)
    if command == "rank":
        return cmd_rank(cfg, out)
    if command == "topics":
        return cmd_topics(cfg, out)
    return cmd_cv(cfg, out, grids)


def _publish(staging, out):
    os.makedirs(out, exist_ok=True)
    for name in sorted(os.listdir(staging)):
        os.replace(os.path.join(staging, name), os.path.join(out, name))


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args, rest = parser.parse_known_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2

    staging = None
    try:
        raw = {}
        base_dir = "."
        if args.config:
            raw.update(read_config(args.config))
            base_dir = os.path.dirname(os.path.abspath(args.config))
        raw.update(_split_overrides(rest))
        for key in ("seed", "threads", "model"):
            if getattr(args, key) is not None:
                raw[key] = getattr(args, key)
        cfg = resolve_config({k: v for k, v in raw.items()
                              if not k.startswith("grid_")}, base_dir)
        grids = {k[len("grid_"):]: _parse_value(k, v)
                 for k, v in sorted(raw.items()) if k.startswith("grid_")}
        if grids and args.command != "cv":
            raise ConfigError("grid_* settings are only valid for cv")

        out = os.path.abspath(args.out)
        parent = os.path.dirname(out)
        os.makedirs(parent, exist_ok=True)
        staging = tempfile.mkdtemp(prefix=".staging-", dir=parent)
        with threadpool_limits(limits=cfg["threads"]):
            info = _run(args.command, cfg, grids, staging)
        config_record = {k: v for k, v in cfg.items() if v is not None}
        config_record.update({f"grid_{k}": v for k, v in grids.items()})
        files.write_json(os.path.join(staging, "metadata.json"), {
            "command": args.command,
            "config": config_record,
            "result": info,
        })
        _publish(staging, out)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and signal failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    finally:
        if staging is not None and os.path.isdir(staging):
            shutil.rmtree(staging, ignore_errors=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
