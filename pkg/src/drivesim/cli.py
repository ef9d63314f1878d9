"""Command-line entry point.

Subcommands: ingest, synth-expert, train, fit, rollout, evaluate, report.
Exit codes: 0 success, 1 usage error, 2 data/config error.  Progress goes to
stderr; machine-readable output (CSV/JSON) goes to files under the output
directory only.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import expert as xp
from . import ingest
from . import metrics as mx
from . import model_io
from . import roadway as rd
from . import synth
from .baselines import (DegenerateComponent, TooFewSamples,
                        fit_mixture_regression, fit_static_gaussian)
from .config import ConfigError, load_config, validate_paths
from .features import NormStats
from .learn import NonFiniteGradient, bc_train, gail_train
from .model_io import ModelFormatError
from .nets import DiscriminatorNet, GruPolicyNet, MlpPolicyNet
from .policies import (IdmMobilPolicy, MixtureRegressionPolicy, NeuralPolicy,
                       ReplayPolicy, StaticGaussianPolicy)
from .simenv import Env, NoEligibleScene, SimConfig
from .simenv import rollout as run_rollout
from .simenv import write_rollout_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

BUILTIN_POLICIES = ("idm", "replay")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage errors as exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _log(msg):
    print(msg, file=sys.stderr)


def _add_common(p):
    p.add_argument("--config", metavar="FILE", default=None,
                   help="run configuration file (INI sections)")
    p.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VAL",
                   help="override one configuration value (repeatable; wins "
                        "over the file)")
    p.add_argument("--out", default=None, metavar="DIR",
                   help="output directory (wins over config and environment)")
    p.add_argument("--seed", type=int, default=None, help="master seed")


def _build_config(args):
    overrides = list(args.set)
    if args.out is not None:
        overrides.append(f"paths.output_dir={args.out}")
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if getattr(args, "jobs", None) is not None:
        overrides.append(f"metrics.jobs={args.jobs}")
    return load_config(args.config, overrides)


def _outpath(cfg, *parts):
    os.makedirs(cfg.paths.output_dir, exist_ok=True)
    return os.path.join(cfg.paths.output_dir, *parts)


def _load_scene(cfg):
    validate_paths(cfg)
    raw = ingest.load_trajectories(cfg.paths.dataset)
    cars = ingest.filter_cars(raw)
    if not cars:
        raise ConfigError("dataset contains no car trajectories")
    _log(f"loaded {len(raw)} trajectories ({len(cars)} cars); smoothing ...")
    smoothed = [ingest.ekf_smooth(t) for t in cars]
    scene = ingest.build_scene_index(smoothed)
    roadway = rd.load_centerlines(cfg.paths.centerlines,
                                  lane_width=cfg.sim.lane_width
                                  if hasattr(cfg.sim, "lane_width") else 3.7)
    return scene, roadway


def _sim_config(cfg):
    return cfg.sim if isinstance(cfg.sim, SimConfig) else SimConfig()


def _expert_pipeline(cfg, scene, roadway):
    """Expert data with fitted normalization stats, saved under the out dir."""
    data = xp.extract(scene, roadway, dt=cfg.sim.dt)
    if len(data.raw_obs) == 0:
        raise ConfigError("no expert state-action pairs could be extracted")
    stats_path = _outpath(cfg, cfg.features.stats_file)
    data.stats.save(stats_path)
    _log(f"extracted {len(data.raw_obs)} expert pairs; stats -> {stats_path}")
    return data, stats_path


# -- subcommand implementations -------------------------------------------

def _cmd_ingest(args):
    cfg = _build_config(args)
    scene, _ = _load_scene(cfg)
    out = _outpath(cfg, "smoothed.csv")
    ingest.save_smoothed(list(scene.trajectories.values()), out)
    n_deg = sum(1 for t in scene.trajectories.values() if t.degenerate)
    _log(f"smoothed {len(scene.trajectories)} car trajectories "
         f"({n_deg} degenerate) -> {out}")
    return EXIT_OK


def _cmd_synth_expert(args):
    cfg = _build_config(args)
    roadway, rows = synth.generate(cfg.synth, seed=cfg.seed)
    data_path = _outpath(cfg, "trajectories.csv")
    lane_path = _outpath(cfg, "centerlines.csv")
    synth.write_dataset(rows, data_path)
    synth.write_centerlines(roadway, lane_path)
    n_vehicles = len({r[0] for r in rows})
    _log(f"synthesized {n_vehicles} vehicle trajectories over "
         f"{cfg.synth.n_episodes} episodes -> {data_path}")
    return EXIT_OK


def _make_net(arch, seed):
    if arch == "mlp":
        return MlpPolicyNet(seed=seed)
    return GruPolicyNet(seed=seed)


def _cmd_train(args):
    cfg = _build_config(args)
    scene, roadway = _load_scene(cfg)
    data, stats_path = _expert_pipeline(cfg, scene, roadway)
    seeds = np.random.SeedSequence(cfg.seed)
    net_seed, train_seed = [int(s.generate_state(1)[0]) for s in seeds.spawn(2)]
    net = _make_net(args.arch, net_seed)
    rng = np.random.default_rng(train_seed)
    name = f"{args.algo}_{args.arch}"
    hist_path = _outpath(cfg, f"{name}_history.csv")

    if args.algo == "bc":
        history = bc_train(net, data.obs, data.actions,
                           epochs=cfg.bc.epochs, step_size=cfg.bc.step_size,
                           rng=rng, minibatch=cfg.bc.minibatch,
                           heldout_frac=cfg.bc.heldout_fraction,
                           sequences=data.sequences() if net.recurrent else None)
        with open(hist_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "train_nll", "heldout_nll"])
            for i, (tr, ho) in enumerate(history):
                w.writerow([i, repr(tr), repr(ho)])
        _log(f"BC final train NLL {history[-1][0]:.4f}")
    else:
        disc = DiscriminatorNet(seed=net_seed + 1)
        env = Env(scene, roadway, cfg.sim, data.stats)

        def sampler(policy_net, n_episodes, srng):
            pol = NeuralPolicy(policy_net)
            return [run_rollout(pol, env, srng) for _ in range(n_episodes)]

        def progress(it, row):
            _log(f"iter {it}: V={row['V']:.4f} reward={row['mean_reward']:.3f} "
                 f"kl={row['mean_kl']:.5f} len={row['mean_len']:.1f} "
                 f"accepted={row['accepted']}")

        history = gail_train(sampler, data.sa_pairs(), net, disc,
                             gail_cfg=cfg.gail, trpo_cfg=cfg.trpo, rng=rng,
                             callback=progress)
        with open(hist_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["iter", "V", "mean_reward", "mean_kl", "mean_len",
                        "accepted"])
            for row in history.rows:
                w.writerow([row["iter"], repr(row["V"]),
                            repr(row["mean_reward"]), repr(row["mean_kl"]),
                            repr(row["mean_len"]), int(row["accepted"])])
        model_io.save_net(disc, _outpath(cfg, f"{name}_disc.npz"),
                          stats_file=cfg.features.stats_file)

    model_path = _outpath(cfg, f"{name}.npz")
    model_io.save_net(net, model_path, stats_file=cfg.features.stats_file)
    _log(f"model -> {model_path}; history -> {hist_path}")
    return EXIT_OK


def _cmd_fit(args):
    cfg = _build_config(args)
    scene, roadway = _load_scene(cfg)
    data, _ = _expert_pipeline(cfg, scene, roadway)
    if args.model == "sg":
        model = fit_static_gaussian(data.actions)
        path = _outpath(cfg, "sg.npz")
        model_io.save_static_gaussian(model, path)
    else:
        model = fit_mixture_regression(
            data.actions, data.obs, K=cfg.baselines.mr_components,
            max_features=cfg.baselines.mr_max_features,
            iters=cfg.baselines.em_iters, seed=cfg.seed)
        path = _outpath(cfg, "mr.npz")
        model_io.save_mixture_regression(model, path,
                                         stats_file=cfg.features.stats_file)
        _log(f"mixture regression selected features {model.feature_indices}")
    _log(f"model -> {path}")
    return EXIT_OK


def _policy_from_spec(spec, cfg):
    """Resolve one --models entry to (name, policy, stats file or None)."""
    if spec in BUILTIN_POLICIES:
        if spec == "idm":
            return spec, IdmMobilPolicy(idm=cfg.idm, mobil=cfg.mobil,
                                        noise=cfg.controller_noise), None
        return spec, ReplayPolicy(), None
    if "=" in spec:
        name, path = spec.split("=", 1)
    else:
        path = spec
        name = os.path.splitext(os.path.basename(path))[0]
    if not os.path.exists(path):
        raise ConfigError(f"model file not found: {path}")
    model, kind, stats_file = model_io.load_model(path)
    if stats_file is not None and not os.path.isabs(stats_file):
        stats_file = os.path.join(os.path.dirname(path) or ".", stats_file)
    if kind in ("mlp_policy", "gru_policy"):
        return name, NeuralPolicy(model), stats_file
    if kind == "static_gaussian":
        return name, StaticGaussianPolicy(model), stats_file
    if kind == "mixture_regression":
        return name, MixtureRegressionPolicy(model), stats_file
    raise ModelFormatError(f"{path}: a {kind} model cannot act as a policy")


def _resolve_stats(stats_files, cfg):
    """One shared normalization-stats file for the evaluation env."""
    for sf in stats_files:
        if sf is not None:
            if not os.path.exists(sf):
                raise ConfigError(f"normalization stats not found: {sf}")
            return NormStats.load(sf)
    default = _outpath(cfg, cfg.features.stats_file)
    if os.path.exists(default):
        return NormStats.load(default)
    return None


def _cmd_rollout(args):
    cfg = _build_config(args)
    scene, roadway = _load_scene(cfg)
    name, policy, stats_file = _policy_from_spec(args.model, cfg)
    stats = _resolve_stats([stats_file], cfg)
    env = Env(scene, roadway, cfg.sim, stats)
    rng = np.random.default_rng(cfg.seed)
    for k in range(args.n):
        ro = run_rollout(policy, env, rng, frame=args.frame, ego_id=args.ego)
        out = _outpath(cfg, f"rollout_{name}_{k}.csv")
        write_rollout_csv(ro, out)
        _log(f"rollout {k}: frame {ro.scene_frame} ego {ro.ego_id} "
             f"{len(ro)} steps, ended by {ro.termination} -> {out}")
    return EXIT_OK


def _cmd_evaluate(args):
    cfg = _build_config(args)
    scene, roadway = _load_scene(cfg)
    models = {}
    stats_files = []
    for spec in args.models:
        name, policy, stats_file = _policy_from_spec(spec, cfg)
        if name in models:
            raise ConfigError(f"duplicate model name {name!r}")
        models[name] = policy
        stats_files.append(stats_file)
    stats = _resolve_stats(stats_files, cfg)
    _log(f"evaluating {list(models)} on {cfg.metrics.scenes} scenes x "
         f"{cfg.metrics.repeats} repeats (jobs={cfg.metrics.jobs})")
    reports = mx.run_campaign(models, scene, roadway, cfg.sim, stats,
                              campaign=cfg.metrics, seed=cfg.seed)
    mx.write_reports(reports, cfg.paths.output_dir)
    _log(f"reports -> {cfg.paths.output_dir}/evaluation.json")
    return EXIT_OK


def _cmd_report(args):
    cfg = _build_config(args)
    src = args.evaluation or _outpath(cfg, "evaluation.json")
    if not os.path.exists(src):
        raise ConfigError(f"evaluation report not found: {src}")
    with open(src) as f:
        payload = json.load(f)
    reports = {name: mx.EvaluationReport(
        model=d["model"], rwse=d["rwse"], kl=d["kl"], emergent=d["emergent"],
        n_rollouts=d.get("n_rollouts", 0)) for name, d in payload.items()}
    mx.write_reports(reports, cfg.paths.output_dir)
    _log(f"figure tables -> {cfg.paths.output_dir}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="drivesim",
                     description="driver-behavior imitation workbench")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND",
                                parser_class=_Parser)

    p = sub.add_parser("ingest", help="load, filter, smooth and index a "
                                      "trajectory dataset")
    _add_common(p)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("synth-expert", help="generate the synthetic roadway "
                                            "and expert trajectories")
    _add_common(p)
    p.set_defaults(func=_cmd_synth_expert)

    p = sub.add_parser("train", help="train an imitation policy")
    p.add_argument("algo", choices=("bc", "gail"))
    p.add_argument("--arch", choices=("mlp", "gru"), default="mlp")
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("fit", help="fit a statistical baseline")
    p.add_argument("model", choices=("sg", "mr"))
    _add_common(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("rollout", help="run and record episodes under one "
                                       "policy")
    p.add_argument("--model", required=True,
                   help="model file, NAME=FILE, or builtin (idm, replay)")
    p.add_argument("--frame", type=int, default=None)
    p.add_argument("--ego", type=int, default=None)
    p.add_argument("-n", type=int, default=1, help="number of episodes")
    _add_common(p)
    p.set_defaults(func=_cmd_rollout)

    p = sub.add_parser("evaluate", help="run the validation campaign")
    p.add_argument("--models", nargs="+", required=True,
                   help="model files, NAME=FILE entries, or builtins "
                        "(idm, replay)")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel rollout workers")
    _add_common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="re-emit figure-shaped CSV tables from "
                                      "an evaluation report")
    p.add_argument("--evaluation", default=None,
                   help="evaluation.json path (default: under the output dir)")
    _add_common(p)
    p.set_defaults(func=_cmd_report)
    return parser


DATA_ERRORS = (ConfigError, ModelFormatError, ingest.ParseError,
               ingest.GapError, rd.EmptyRoadway, NoEligibleScene,
               TooFewSamples, DegenerateComponent, NonFiniteGradient,
               FileNotFoundError, OSError)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_usage(sys.stderr)
            _log("drivesim: a subcommand is required")
            return EXIT_USAGE
        return args.func(args)
    except UsageError as e:
        _log(f"drivesim: {e}")
        return EXIT_USAGE
    except SystemExit as e:  # argparse --help exits 0
        code = e.code if isinstance(e.code, int) else 0
        return code
    except DATA_ERRORS as e:
        _log(f"drivesim: error: {e}")
        return EXIT_DATA


def console_main():
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
