"""Command-line entry point: ``cgnf <subcommand> ...``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, gcomp_oracle, scm_sim
from .causal import InterventionSpec, counterfactual, estimate_ate, sample_interventional
from .dag import CausalDAG, two_wave_dag
from .errors import CgnfError, NumericalError
from .experiments import (ALL_ESTIMATORS, BenchmarkConfig, canonical_json, parse_grid, run_benchmark,
                          run_policy_eval, run_surface)
from .flow import FlowModel, TrainConfig, fit

log = logging.getLogger("cgnf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _emit(obj, out: str | None) -> None:
    text = canonical_json(obj)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_dag(path: str | None) -> CausalDAG:
    return CausalDAG.load(path) if path else two_wave_dag()


def _read_table(path: str, names) -> np.ndarray:
    return scm_sim.read_csv(path, tuple(names))


def _split_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def cmd_simulate(args) -> None:
    sim = scm_sim.simulate(args.setting, args.n, args.seed)
    sim.save(args.out, args.noise_out)
    log.info("wrote %d rows to %s", len(sim), args.out)


def cmd_train(args) -> None:
    dag = _load_dag(args.dag)
    data = _read_table(args.data, dag.names)
    config = TrainConfig(seed=args.seed, max_epochs=args.max_epochs, patience=args.patience,
                         n_steps=args.steps, lr=args.lr, batch_size=args.batch_size)
    model, history = fit(dag, data, config)
    model.save(args.model)
    _emit(history.summary(), args.log_out)


def cmd_ate(args) -> None:
    model = FlowModel.load(args.model)
    if args.do:
        spec = InterventionSpec.parse(args.do)
        x = sample_interventional(model, spec, args.mc_samples, args.seed)
        _emit({"do": dict(spec.assignments), "mean": dict(zip(model.dag.names, x.mean(axis=0).tolist())),
               "n_mc": args.mc_samples}, args.out)
        return
    est = estimate_ate(model, n_mc=args.mc_samples, seed=args.seed)
    _emit({"estimator": "cgnf", "n_mc": args.mc_samples, **est._asdict()}, args.out)


def cmd_baselines(args) -> None:
    data = _read_table(args.data, scm_sim.COLUMNS)
    result = {}
    for name in _split_list(args.estimators):
        if name not in baselines.ESTIMATORS:
            raise UsageError(f"unknown baseline {name!r}")
        result[name] = baselines.ESTIMATORS[name](data)._asdict()
    _emit(result, args.out)


def cmd_counterfactual(args) -> None:
    model = FlowModel.load(args.model)
    data = _read_table(args.data, model.dag.names)
    rows = [int(r) for r in _split_list(args.rows)] if args.rows else list(range(data.shape[0]))
    res = counterfactual(model, data[rows])
    truth = None
    if args.noise:
        if not args.setting:
            raise UsageError("--noise needs --setting to compute the true optimal arm")
        noise = _read_table(args.noise, scm_sim.NOISE_COLUMNS)
        truth = scm_sim.true_optimal_policy(noise[rows], args.setting)
    units = []
    for k, r in enumerate(rows):
        unit = {
            "row": r,
            "observed": dict(zip(model.dag.names, data[r].tolist())),
            "z": res.z[k].tolist(),
            "potential_outcomes": {f"{a1},{a2}": float(res.outcomes[k, j]) for j, (a1, a2) in enumerate(res.arms)},
            "chosen_arm": res.policy[k].tolist(),
        }
        if truth is not None:
            unit["true_optimal_arm"] = truth[k].tolist()
        units.append(unit)
    _emit({"units": units}, args.out)


def cmd_policy(args) -> None:
    model = FlowModel.load(args.model)
    data = _read_table(args.data, model.dag.names)
    noise = _read_table(args.noise, scm_sim.NOISE_COLUMNS) if args.noise else None
    _emit(run_policy_eval(model, data, noise, args.setting), args.out)


def cmd_surface(args) -> None:
    model = FlowModel.load(args.model)
    g1 = parse_grid(args.grid)
    g2 = parse_grid(args.grid2 or args.grid)
    if args.arm:
        a1, a2 = (int(v) for v in args.arm.split(","))
        arms = [(a1, a2)]
    else:
        arms = list(scm_sim.ARMS)
    text = run_surface(model, g1, g2, arms, args.setting)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_benchmark(args) -> None:
    train = {}
    if args.max_epochs is not None:
        train["max_epochs"] = args.max_epochs
    if args.patience is not None:
        train["patience"] = args.patience
    config = BenchmarkConfig(
        settings=_split_list(args.settings), sizes=[int(s) for s in _split_list(args.sizes)],
        seeds=args.seeds, estimators=_split_list(args.estimators), train=train,
        mc_samples=args.mc_samples, master_seed=args.seed, out=args.out, jobs=args.jobs,
    )
    report = run_benchmark(config)
    for row in report["results"]:
        print(f"{row['setting']} n={row['size']:<6d} {row['estimator']:<11s} {row['lambda']}: "
              f"mean {row['mean']:+.3f} sd {row['std']:.3f} (true {row['true']:.1f})")


def cmd_oracle(args) -> None:
    if args.scm:
        scm = gcomp_oracle.DiscreteSCM.load(args.scm)
    elif args.fixture == "binarized":
        scm = gcomp_oracle.binarized_two_wave()
    else:
        scm = gcomp_oracle.k_wave_scm(3, args.seed)
    spec = InterventionSpec.parse(args.do) if args.do else InterventionSpec({})
    dist = gcomp_oracle.interventional_distribution(scm, spec.assignments, args.target)
    out = {"do": dict(spec.assignments), "target": args.target, "distribution": dist.tolist()}
    if args.mc:
        draws = gcomp_oracle.sample_mutilated(scm, spec.assignments, args.mc, args.seed)[:, scm.dag.index(args.target)]
        out["monte_carlo"] = np.bincount(draws, minlength=dist.size).astype(float).__truediv__(args.mc).tolist()
    if args.save_scm:
        scm.save(args.save_scm)
    _emit(out, args.out)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cgnf", description="Causal graphical normalizing flows for 2-wave treatment studies.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate a 2-wave dataset")
    s.add_argument("--setting", default="a", choices=["a", "b", "c"])
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--noise-out", help="noise sidecar CSV (oracle use only)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("train", help="fit a flow to a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--dag", help="DAG JSON (default: 2-wave model)")
    s.add_argument("--model", required=True, help="output model file")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-epochs", type=int, default=300)
    s.add_argument("--patience", type=int, default=10)
    s.add_argument("--steps", type=int, default=20, help="quadrature intervals")
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch-size", type=int, default=128)
    s.add_argument("--log-out", help="write the training summary JSON here")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("ate", help="Monte-Carlo ATEs (or interventional means with --do)")
    s.add_argument("--model", required=True)
    s.add_argument("--mc-samples", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--do", help="e.g. A1=1,A2=0")
    s.add_argument("--out")
    s.set_defaults(func=cmd_ate)

    s = sub.add_parser("baselines", help="classical estimators on a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--estimators", default="ipw,rwr,gcom,gcom_theta")
    s.add_argument("--out")
    s.set_defaults(func=cmd_baselines)

    s = sub.add_parser("counterfactual", help="per-unit potential outcomes and chosen arm")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--rows", help="comma-separated row indices (default: all)")
    s.add_argument("--noise", help="noise sidecar to report the true optimal arm")
    s.add_argument("--setting", choices=["a", "b", "c"])
    s.add_argument("--out")
    s.set_defaults(func=cmd_counterfactual)

    s = sub.add_parser("policy", help="confusion matrices of optimal-arm predictions")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--noise")
    s.add_argument("--setting", required=True, choices=["a", "b", "c"])
    s.add_argument("--out")
    s.set_defaults(func=cmd_policy)

    s = sub.add_parser("surface", help="potential-outcome surface over (z_C1, z_C2)")
    s.add_argument("--model", required=True)
    s.add_argument("--grid", default="-3:3:61", help="lo:hi:count for z_C1 (and z_C2)")
    s.add_argument("--grid2", help="separate lo:hi:count for z_C2")
    s.add_argument("--arm", help="a1,a2 (default: all four arms)")
    s.add_argument("--setting", choices=["a", "b", "c"], help="add the true-SCM oracle column")
    s.add_argument("--out")
    s.set_defaults(func=cmd_surface)

    s = sub.add_parser("benchmark", help="run the simulation benchmark")
    s.add_argument("--settings", default="a")
    s.add_argument("--sizes", default="500,2000")
    s.add_argument("--seeds", type=int, default=5)
    s.add_argument("--estimators", default=",".join(ALL_ESTIMATORS))
    s.add_argument("--mc-samples", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0, help="master seed")
    s.add_argument("--max-epochs", type=int)
    s.add_argument("--patience", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("oracle", help="exact g-computation on a discrete SCM")
    src = s.add_mutually_exclusive_group()
    src.add_argument("--scm", help="DiscreteSCM JSON")
    src.add_argument("--fixture", choices=["binarized", "kwave3"], default="binarized")
    s.add_argument("--do", help="e.g. A1=1,A2=0")
    s.add_argument("--target", default="Y")
    s.add_argument("--mc", type=int, default=0, help="also estimate by mutilated sampling")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--save-scm")
    s.add_argument("--out")
    s.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CGNF_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"cgnf: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (UsageError, CgnfError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"cgnf: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
