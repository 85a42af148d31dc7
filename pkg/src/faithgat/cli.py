"""Batch command-line front door.

Subcommands: gen-data, train, fgai, attack, eval-stability, eval-fidelity,
report.  Stages read only declared inputs, write JSON/CSV plus an updated
manifest, and are idempotent given identical config and seeds.  Exit codes:
0 success, 2 config error, 3 dependency error, 4 numerical error.
Verbosity is controlled only by the FAITHGAT_LOG environment variable
(quiet | info | debug).
"""

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .attack import AttackSpec, inject_attack
from .data import generate_sbm, load_dataset, read_dataset_dir, write_dataset
from .errors import ConfigError, DependencyError, FaithgatError, NumericalError, StructuralError
from .fgai import faithfulness_report, fgai_train, write_fgai_log
from .manifest import RunManifest
from .metrics import fidelity_curve, g_jsd, g_tvd, random_removal_curve
from .model import forward, load_params, micro_f1, save_params, train_vanilla, write_training_log
from .runconfig import RunConfig, load_run_config

log = logging.getLogger("faithgat")


def _setup_logging():
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("FAITHGAT_LOG", "quiet").lower(), logging.WARNING
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _json_dump(doc, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _summary(values):
    return {
        "values": [float(v) for v in values],
        "mean": float(np.mean(values)),
        "std": float(np.std(values)),
    }


def _manifest(cfg: RunConfig) -> RunManifest:
    return RunManifest.load_or_create(cfg.output_dir, cfg.config_hash(), cfg.seeds)


def _load_dataset(cfg: RunConfig):
    data_dir = Path(cfg.output_dir) / "data"
    if not (data_dir / "dataset_manifest.json").exists():
        raise DependencyError("missing stage: gen-data (no dataset under %s)" % data_dir)
    return read_dataset_dir(data_dir)


def _build_dataset(cfg: RunConfig):
    d = cfg.dataset
    if d.source == "sbm":
        return generate_sbm(
            d.blocks, d.nodes_per_block, d.p_in, d.p_out, d.feature_dim, d.feature_shift, d.seed
        )
    return load_dataset(d.edges, d.features, d.labels, d.split,
                        name=d.name or "dataset", split_seed=d.seed)


def _model_path(cfg, kind, seed):
    return Path(cfg.output_dir) / "models" / f"{kind}_seed{seed}.json"


def _require_models(cfg, kind, stage_needed):
    paths = [_model_path(cfg, kind, s) for s in cfg.seeds]
    missing = [p for p in paths if not p.exists()]
    if missing:
        raise DependencyError(f"missing stage: {stage_needed} ({missing[0]} not found)")
    return paths


def _model_kinds(cfg):
    """Vanilla always; fgai when its params exist for every seed."""
    kinds = ["vanilla"]
    if all(_model_path(cfg, "fgai", s).exists() for s in cfg.seeds):
        kinds.append("fgai")
    return kinds


def cmd_gen_data(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    ds = _build_dataset(cfg)
    data_dir = Path(cfg.output_dir) / "data"
    write_dataset(ds, data_dir, seed=cfg.dataset.seed)
    outputs = sorted(str(p) for p in data_dir.iterdir())
    man = _manifest(cfg)
    man.record_stage("gen-data", outputs, time.perf_counter() - t0)
    man.save()
    print(f"gen-data: {ds.name} N={ds.graph.num_nodes} slots={ds.graph.num_slots} -> {data_dir}")
    print(f"manifest_hash {man.manifest_hash()}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    ds = _load_dataset(cfg)
    out = Path(cfg.output_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    outputs = []
    for seed in cfg.seeds:
        hyper = dataclasses.replace(cfg.model, seed=seed)
        params, tlog = train_vanilla(ds, hyper)
        mp = _model_path(cfg, "vanilla", seed)
        lp = out / "logs" / f"train_seed{seed}.csv"
        save_params(params, mp)
        write_training_log(tlog, lp)
        outputs += [str(mp), str(lp)]
        _, probs = forward(ds.graph, ds.features, params)
        log.info("train seed %d: val_f1=%.4f", seed, micro_f1(probs, ds.labels, ds.split.val))
    man = _manifest(cfg)
    man.record_stage("train", outputs, time.perf_counter() - t0)
    man.save()
    print(f"train: {len(cfg.seeds)} model(s) -> {out / 'models'}")
    print(f"manifest_hash {man.manifest_hash()}")
    return 0


def cmd_fgai(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    ds = _load_dataset(cfg)
    _require_models(cfg, "vanilla", "train")
    out = Path(cfg.output_dir)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    outputs = []
    for seed in cfg.seeds:
        vanilla = load_params(_model_path(cfg, "vanilla", seed))
        fcfg = dataclasses.replace(cfg.fgai, seed=seed)
        tuned, flog = fgai_train(ds, vanilla, fcfg)
        mp = _model_path(cfg, "fgai", seed)
        lp = out / "logs" / f"fgai_seed{seed}.csv"
        save_params(tuned, mp)
        write_fgai_log(flog, lp)
        outputs += [str(mp), str(lp)]
        log.info("fgai seed %d: final total loss %.5f", seed, flog[-1].total)
    man = _manifest(cfg)
    man.record_stage("fgai", outputs, time.perf_counter() - t0)
    man.save()
    print(f"fgai: {len(cfg.seeds)} model(s) -> {out / 'models'}")
    print(f"manifest_hash {man.manifest_hash()}")
    return 0


def _attack_spec_for_seed(cfg, seed) -> AttackSpec:
    return dataclasses.replace(cfg.attack, seed=seed)


def cmd_attack(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    ds = _load_dataset(cfg)
    _require_models(cfg, "vanilla", "train")
    out = Path(cfg.output_dir)
    outputs = []
    for kind in _model_kinds(cfg):
        for seed in cfg.seeds:
            victim = load_params(_model_path(cfg, kind, seed))
            result = inject_attack(ds, victim, _attack_spec_for_seed(cfg, seed))
            adir = out / "attacks" / f"{kind}_seed{seed}"
            write_dataset(result.perturbed, adir, seed=seed)
            info = {
                "victim": kind,
                "seed": seed,
                "injected_nodes": result.injected_nodes.tolist(),
                "original_slots": int(result.edge_map.shape[0]),
            }
            _json_dump(info, adir / "attack_info.json")
            outputs += sorted(str(p) for p in adir.iterdir())
    man = _manifest(cfg)
    man.record_stage("attack", outputs, time.perf_counter() - t0)
    man.save()
    print(f"attack: perturbed datasets -> {out / 'attacks'}")
    print(f"manifest_hash {man.manifest_hash()}")
    return 0


def cmd_eval_stability(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    ds = _load_dataset(cfg)
    _require_models(cfg, "vanilla", "train")
    out = Path(cfg.output_dir)
    n = ds.graph.num_nodes
    outputs = []
    for kind in _model_kinds(cfg):
        rows = {"f1": [], "f1_attacked": [], "g_tvd": [], "g_jsd": []}
        extra = {}
        for seed in cfg.seeds:
            params = load_params(_model_path(cfg, kind, seed))
            att, probs = forward(ds.graph, ds.features, params)
            result = inject_attack(ds, params, _attack_spec_for_seed(cfg, seed))
            pd = result.perturbed
            att_a, probs_a = forward(pd.graph, pd.features, params)
            rows["f1"].append(micro_f1(probs, ds.labels, ds.split.test))
            rows["f1_attacked"].append(micro_f1(probs_a, pd.labels, pd.split.test))
            rows["g_tvd"].append(g_tvd(probs, probs_a, np.arange(n)))
            rows["g_jsd"].append(g_jsd(att.averaged, att_a.averaged, result.edge_map))
        if kind == "fgai":
            monitor = {"interp_similarity": [], "interp_stability": [],
                       "pred_closeness": [], "pred_stability": []}
            for seed in cfg.seeds:
                rep = faithfulness_report(
                    ds,
                    load_params(_model_path(cfg, "vanilla", seed)),
                    load_params(_model_path(cfg, "fgai", seed)),
                    cfg.fgai, trials=cfg.eval.trials, seed=seed,
                )
                for key in monitor:
                    monitor[key].append(rep[key])
            extra["faithfulness"] = {k: _summary(v) for k, v in monitor.items()}
        doc = {
            "model": kind,
            "dataset": ds.name,
            "seed_list": list(cfg.seeds),
            **{k: _summary(v) for k, v in rows.items()},
            **extra,
        }
        path = out / "reports" / f"stability_{kind}.json"
        _json_dump(doc, path)
        outputs.append(str(path))
        log.info("stability %s: g_tvd=%.6f g_jsd=%.3e", kind,
                 doc["g_tvd"]["mean"], doc["g_jsd"]["mean"])
    man = _manifest(cfg)
    man.record_stage("eval-stability", outputs, time.perf_counter() - t0)
    man.save()
    print(f"eval-stability: reports -> {out / 'reports'}")
    print(f"manifest_hash {man.manifest_hash()}")
    return 0


def _write_curve_csv(path, curve):
    with open(path, "w") as fh:
        fh.write("r,f_plus,f_minus\n")
        for r, fp, fm in zip(curve.ratios, curve.f_plus, curve.f_minus):
            fh.write(f"{repr(float(r))},{repr(float(fp))},{repr(float(fm))}\n")


def cmd_eval_fidelity(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    ds = _load_dataset(cfg)
    _require_models(cfg, "vanilla", "train")
    out = Path(cfg.output_dir)
    (out / "reports").mkdir(parents=True, exist_ok=True)
    outputs = []
    for kind in _model_kinds(cfg):
        doc = {"model": kind, "dataset": ds.name, "seed_list": list(cfg.seeds)}
        for setting in ("clean", "attacked"):
            curves, baselines = [], []
            for seed in cfg.seeds:
                params = load_params(_model_path(cfg, kind, seed))
                if setting == "clean":
                    target = ds
                else:
                    target = inject_attack(ds, params, _attack_spec_for_seed(cfg, seed)).perturbed
                att, _ = forward(target.graph, target.features, params)
                curve = fidelity_curve(target, params, att, cfg.eval.ratios)
                curves.append(curve)
                baselines.append(random_removal_curve(target, params, cfg.eval.ratios, seed))
                csv_path = out / "reports" / f"fidelity_{kind}_seed{seed}_{setting}.csv"
                _write_curve_csv(csv_path, curve)
                outputs.append(str(csv_path))
            n_r = len(cfg.eval.ratios)
            doc[setting] = {
                "r": [float(r) for r in cfg.eval.ratios],
                "f_plus": [float(np.mean([c.f_plus[i] for c in curves])) for i in range(n_r)],
                "f_minus": [float(np.mean([c.f_minus[i] for c in curves])) for i in range(n_r)],
                # same-count random removal, the red-flag baseline for f_minus
                "f_random": [float(np.mean([b[i] for b in baselines])) for i in range(n_r)],
                "slope_plus": _summary([c.slope_plus for c in curves]),
                "slope_minus": _summary([c.slope_minus for c in curves]),
                "slope_plus_abs": _summary([abs(c.slope_plus) for c in curves]),
                "slope_minus_abs": _summary([abs(c.slope_minus) for c in curves]),
            }
        path = out / "reports" / f"fidelity_{kind}.json"
        _json_dump(doc, path)
        outputs.append(str(path))
    man = _manifest(cfg)
    man.record_stage("eval-fidelity", outputs, time.perf_counter() - t0)
    man.save()
    print(f"eval-fidelity: curves -> {out / 'reports'}")
    print(f"manifest_hash {man.manifest_hash()}")
    return 0


def cmd_report(run_dirs) -> int:
    rows = []
    for rd in run_dirs:
        reports = sorted(Path(rd).glob("reports/stability_*.json"))
        if not reports:
            raise DependencyError(f"missing stage: eval-stability (no stability report under {rd})")
        for sp in reports:
            stab = json.loads(sp.read_text())
            try:
                kind = stab["model"]
                row = {
                    "run_dir": str(rd),
                    "model": kind,
                    "dataset": stab["dataset"],
                    "seed_list": stab["seed_list"],
                    "f1": stab["f1"],
                    "f1_attacked": stab["f1_attacked"],
                    "g_tvd": stab["g_tvd"],
                    "g_jsd": stab["g_jsd"],
                }
            except KeyError as exc:
                raise StructuralError(f"{sp}: stability report missing field {exc}") from None
            fp = Path(rd) / "reports" / f"fidelity_{kind}.json"
            if fp.exists():
                fid = json.loads(fp.read_text())
                row["fidelity"] = {
                    "r": fid["clean"]["r"],
                    "f_plus": fid["clean"]["f_plus"],
                    "f_minus": fid["clean"]["f_minus"],
                    "slope_plus": fid["clean"]["slope_plus"]["mean"],
                    "slope_minus": fid["clean"]["slope_minus"]["mean"],
                    "slope_plus_abs": fid["clean"]["slope_plus_abs"]["mean"],
                    "slope_minus_abs": fid["clean"]["slope_minus_abs"]["mean"],
                }
                row["fidelity_attacked"] = {
                    "r": fid["attacked"]["r"],
                    "f_plus": fid["attacked"]["f_plus"],
                    "f_minus": fid["attacked"]["f_minus"],
                    "slope_plus": fid["attacked"]["slope_plus"]["mean"],
                    "slope_minus": fid["attacked"]["slope_minus"]["mean"],
                    "slope_plus_abs": fid["attacked"]["slope_plus_abs"]["mean"],
                    "slope_minus_abs": fid["attacked"]["slope_minus_abs"]["mean"],
                }
            rows.append(row)

    first = Path(run_dirs[0])
    _json_dump({"rows": rows}, first / "reports" / "report.json")
    cols = ["model", "dataset", "g_jsd", "g_tvd", "f1", "f1_attacked", "slope_plus", "slope_minus"]
    lines = [",".join(cols)]
    for row in rows:
        cells = [row["model"], row["dataset"]]
        for key in ("g_jsd", "g_tvd", "f1", "f1_attacked"):
            cells.append(f"{row[key]['mean']:.6g}+-{row[key]['std']:.3g}")
        fid = row.get("fidelity")
        cells.append(f"{fid['slope_plus']:.6g}" if fid else "")
        cells.append(f"{fid['slope_minus']:.6g}" if fid else "")
        lines.append(",".join(cells))
    csv_path = first / "reports" / "report.csv"
    with open(csv_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    print(f"report: {first / 'reports' / 'report.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="faithgat", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen-data", "train", "fgai", "attack", "eval-stability", "eval-fidelity"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run config file (INI sections)")
        p.add_argument("--seed", type=int, default=None, help="replace the seed list with one seed")
        p.add_argument("--out", default=None, help="override [run] output_dir")
    rep = sub.add_parser("report")
    rep.add_argument("run_dirs", nargs="+", help="run directories holding stability reports")
    return parser


def _config_from_args(args) -> RunConfig:
    overrides = {}
    if args.out is not None:
        overrides[("run", "output_dir")] = args.out
    if args.seed is not None:
        overrides[("run", "seeds")] = str(args.seed)
    return load_run_config(args.config, overrides)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    handlers = {
        "gen-data": cmd_gen_data,
        "train": cmd_train,
        "fgai": cmd_fgai,
        "attack": cmd_attack,
        "eval-stability": cmd_eval_stability,
        "eval-fidelity": cmd_eval_fidelity,
    }
    try:
        if args.command == "report":
            return cmd_report(args.run_dirs)
        return handlers[args.command](_config_from_args(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    except FaithgatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
