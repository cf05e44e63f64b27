"""Command-line entry point: ``octx <command> --config FILE --seed N --out DIR``.

Every command resolves its parameters as defaults < config-file block <
command-line flags, writes the resolved set to ``<out>/config.json`` and
then only writes documented formats into ``<out>``. Errors map to distinct
exit codes (see ``octx.errors``).
"""

from __future__ import annotations

import argparse
import copy
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import agent as agent_mod
from . import core, fdtgs, glcm, io, metrics, multirate, patching, pipeline, synth
from .errors import MalformedFileError, MissingInputError, OctxError, ParameterError

log = logging.getLogger("octx")

DEFAULTS = {
    "generate": {"n_frames": 100, "frame_size": [256, 256], "label_noise": 0.0,
                 "split_ratio": 0.7},
    "extract": {"patch_size": patching.DEFAULT_PATCH_SIZE, "levels": glcm.DEFAULT_LEVELS,
                "overlap": patching.DEFAULT_OVERLAP, "split_ratio": None, "noise": None},
    "search": {"max_iter": 50, "grid": 11, "shrink": 0.5, "tol": 1e-4,
               "lam": fdtgs.DEFAULT_LAMBDA, "low_range": [0.0, 1.0], "high_range": [0.0, 1.0]},
    "train": {"epochs": 200, "l2": 1e-3, "subnets": True},
    "agent": {"epochs": 10, "alpha": agent_mod.DEFAULT_ALPHA,
              "imbalance": agent_mod.DEFAULT_IMBALANCE, "lr": agent_mod.DEFAULT_POLICY_LR,
              "classifier_epochs": 100},
    "infer": {"split": "test", "heatmaps": True},
    "evaluate": {},
    "simlink": {"trace": "staircase", "frame_bits": multirate.DEFAULT_FRAME_BITS,
                "symbol_rate": multirate.DEFAULT_SYMBOL_RATE, "feedback_period": 0.01,
                "hysteresis": 0.0, "latency": 0.0, "fixed": None},
    "sweep": {"trace": "fading", "frame_bits": multirate.DEFAULT_FRAME_BITS,
              "symbol_rate": multirate.DEFAULT_SYMBOL_RATE, "feedback_periods": [0.01],
              "hysteresis": 0.0, "latency": 0.0, "reference_fps": None},
    "plot": {"kind": None},
    "pipeline": {"agent": False},
}

# flag name -> (command blocks it belongs to, type)
OVERRIDES = {
    "n_frames": (("generate",), int),
    "label_noise": (("generate",), float),
    "patch_size": (("extract",), int),
    "levels": (("extract",), int),
    "overlap": (("extract",), float),
    "split_ratio": (("generate", "extract"), float),
    "noise": (("extract",), float),
    "max_iter": (("search",), int),
    "grid": (("search",), int),
    "shrink": (("search",), float),
    "tol": (("search",), float),
    "lam": (("search",), float),
    "epochs": (("train", "agent"), int),
    "l2": (("train",), float),
    "alpha": (("agent",), float),
    "imbalance": (("agent",), int),
    "split": (("infer",), str),
    "trace": (("simlink", "sweep"), str),
    "feedback_period": (("simlink",), float),
    "hysteresis": (("simlink", "sweep"), float),
    "latency": (("simlink", "sweep"), float),
    "fixed": (("simlink",), str),
    "kind": (("plot",), str),
}


def _rel(path, out):
    if path is None:
        return None
    return os.path.relpath(os.path.abspath(path), os.path.abspath(out))


class Run:
    """Resolved parameters and output directory of one command invocation."""

    def __init__(self, command, args, file_cfg):
        self.command = command
        self.out = Path(args.out)
        self.seed = int(args.seed if args.seed is not None else file_cfg.get("seed", 0))
        self.params = copy.deepcopy(DEFAULTS.get(command, {}))
        self.params.update(file_cfg.get(command, {}))
        for name, (blocks, _) in OVERRIDES.items():
            v = getattr(args, name, None)
            if v is not None and command in blocks:
                self.params[name] = v
        self.inputs = {}
        self.file_cfg = file_cfg

    def input(self, name, path):
        self.inputs[name] = _rel(path, self.out) if path is not None else None
        return path

    def start(self):
        self.out.mkdir(parents=True, exist_ok=True)
        io.write_json(self.out / "config.json", {"command": self.command, "seed": self.seed,
                                                 "params": self.params, "inputs": self.inputs})

    def __getitem__(self, key):
        return self.params[key]


def _require(path, what):
    if path is None:
        raise MissingInputError(f"missing required input: {what}")
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"{what} not found: {p}")
    return p


# generate / extract

def cmd_generate(run, args):
    p = run.params
    cfg = synth.GeneratorConfig(n_frames=int(p["n_frames"]), frame_size=tuple(p["frame_size"]),
                                label_noise=float(p["label_noise"]), seed=run.seed)
    run.start()
    ds = synth.generate(cfg)
    fdir = run.out / "frames"
    fdir.mkdir(exist_ok=True)
    for fr in ds.frames:
        io.write_pgm(fdir / fr.manifest_entry()["file"], fr.image)
    man = ds.manifest
    ratio = float(p["split_ratio"])
    assign = patching.split_frames([f.frame_id for f in ds.frames], ratio, run.seed)
    man["splits"] = {"ratio": ratio, "seed": run.seed,
                     "frames": {str(k): v for k, v in sorted(assign.items())}}
    io.write_json(run.out / "manifest.json", man)
    log.info("generated %d frames", len(ds.frames))


def _load_frames(data_dir):
    d = _require(data_dir, "dataset directory")
    man = io.read_json(_require(d / "manifest.json", "dataset manifest"))
    frames = []
    try:
        for e in man["frames"]:
            img = io.read_pgm(d / "frames" / e["file"])
            masks = [patching.LesionMask.from_dict(m) for m in e["masks"]]
            frames.append(synth.SynthFrame(int(e["frame_id"]), img, masks))
    except (KeyError, TypeError) as exc:
        raise MalformedFileError(f"manifest entry is missing {exc}", d / "manifest.json") from None
    return man, frames


def cmd_extract(run, args):
    run.input("data", args.data)
    p = run.params
    man, frames = _load_frames(args.data)
    noise = p["noise"]
    if noise is None:
        noise = float(man.get("generator", {}).get("label_noise", 0.0))
    run.params["noise"] = noise
    run.start()
    table = pipeline.extract(frames, int(p["patch_size"]), int(p["levels"]), float(p["overlap"]))
    if p["split_ratio"] is None and "splits" in man:
        assign = man["splits"]["frames"]
        train = np.array([assign[str(int(f))] == "train" for f in table.frame_id])
    else:
        train = table.train_mask(float(p["split_ratio"] or 0.7), run.seed)
    labels, flipped = synth.plant_noise(table.gt, noise, run.seed)
    io.write_features(run.out / "features.csv", table.patch_id, table.fplus,
                      glcm.fuse_score(table.fplus), labels)
    io.write_features(run.out / "features_minus.csv", table.patch_id, table.fminus,
                      glcm.fuse_score(table.fminus), labels)
    io.write_json(run.out / "patches.json", {
        "patch_size": table.patch_size, "grid_shape": list(table.grid_shape),
        "patch_id": table.patch_id, "frame_id": table.frame_id,
        "col": table.grid_xy[:, 0], "row": table.grid_xy[:, 1],
        "gt": table.gt, "class": table.cls,
        "split": ["train" if t else "test" for t in train]})
    io.write_json(run.out / "noise_oracle.json", {"rate": noise, "seed": run.seed,
                                                  "flipped_ids": flipped})
    log.info("extracted %d patches (%d train)", len(table), int(train.sum()))


def load_features(feat_dir):
    """``(FeatureTable, labels, train_mask)`` from an extract output directory."""
    d = _require(feat_dir, "feature directory")
    ids, fp, _, labels = io.read_features(_require(d / "features.csv", "features.csv"))
    ids_m, fm, _, _ = io.read_features(_require(d / "features_minus.csv", "features_minus.csv"))
    meta = io.read_json(_require(d / "patches.json", "patches.json"))
    if not np.array_equal(ids, ids_m) or not np.array_equal(ids, np.arange(len(ids))):
        raise MalformedFileError("patch ids must be 0..n-1 and match across views", d)
    try:
        table = pipeline.FeatureTable(
            ids, np.array(meta["frame_id"], dtype=np.int64),
            np.stack([meta["col"], meta["row"]], axis=1).astype(np.int64),
            fp, fm, np.array(meta["gt"], dtype=bool), np.array(meta["class"], dtype=np.int64),
            int(meta["patch_size"]), tuple(meta["grid_shape"]))
        train = np.array([s == "train" for s in meta["split"]])
    except (KeyError, ValueError) as exc:
        raise MalformedFileError(f"bad patches.json: {exc}", d / "patches.json") from None
    if len(train) != len(ids):
        raise MalformedFileError("patches.json length differs from features.csv", d)
    return table, labels, train


# search / train / agent

def _search_config(p):
    return fdtgs.SearchConfig(max_iter=int(p["max_iter"]), grid=int(p["grid"]),
                              shrink=float(p["shrink"]), tol=float(p["tol"]),
                              low_range=tuple(p["low_range"]), high_range=tuple(p["high_range"]),
                              lam=float(p["lam"]))


def cmd_search(run, args):
    run.input("features", args.features)
    table, labels, train = load_features(args.features)
    cfg = _search_config(run.params)
    cfg.validate()
    run.start()
    ids = np.nonzero(train)[0]
    s = glcm.fuse_score(table.fplus[ids])
    ts, (pl_state, nl_state), (pl_trace, nl_trace) = fdtgs.search_twin(s, labels[ids], cfg)
    part = fdtgs.partition(s, ts.d1, ts.d2, ids=ids)
    io.write_search_trace(run.out / "search_trace.csv", pl_trace)
    io.write_search_trace(run.out / "search_trace_nl.csv", nl_trace)
    io.write_json(run.out / "thresholds.json", {
        "d1": ts.d1, "d2": ts.d2, "d3": ts.d3, "d4": ts.d4,
        "objective": pl_state.incumbent_objective, "iterations": pl_state.iteration,
        "objective_nl": nl_state.incumbent_objective, "iterations_nl": nl_state.iteration})
    io.write_json(run.out / "partition.json", {"rp": part.rp, "ns": part.ns, "noise": part.noise})
    log.info("thresholds (%.4f, %.4f): %d rp, %d ns", ts.d1, ts.d2, part.rp.size, part.ns.size)


def _load_partition(search_dir):
    d = _require(search_dir, "search directory")
    part = io.read_json(_require(d / "partition.json", "partition.json"))
    try:
        return np.array(part["rp"], dtype=np.int64), np.array(part["ns"], dtype=np.int64)
    except KeyError as exc:
        raise MalformedFileError(f"partition.json lacks {exc}", d / "partition.json") from None


def cmd_train(run, args):
    run.input("features", args.features)
    run.input("search", args.search)
    run.input("cleaned", args.cleaned)
    table, _, _ = load_features(args.features)
    if args.cleaned:
        cl = io.read_json(_require(Path(args.cleaned) / "cleaned.json", "cleaned.json"))
        ids = np.array(cl["ids"], dtype=np.int64)
        y = np.array(cl["labels"], dtype=bool)
    else:
        rp, ns = _load_partition(args.search)
        ids = np.concatenate([rp, ns])
        y = np.r_[np.ones(rp.size, bool), np.zeros(ns.size, bool)]
    run.start()
    p = run.params
    model = core.TwinCrossModel(seed=run.seed).fit(
        table.fplus[ids], table.fminus[ids], y, int(p["epochs"]), seed=run.seed, l2=float(p["l2"]))
    core.save_model(model, run.out / "model.json")
    if p["subnets"]:
        cls = np.where(y, table.cls[ids], 0)
        sub = core.SubnetEnsemble(seed=run.seed).fit(table.fplus[ids], table.fminus[ids], cls,
                                                      int(p["epochs"]), seed=run.seed)
        core.save_model(sub, run.out / "subnets.json")
    log.info("trained on %d patches", ids.size)


def cmd_agent(run, args):
    run.input("features", args.features)
    run.input("search", args.search)
    table, _, _ = load_features(args.features)
    rp, ns = _load_partition(args.search)
    run.start()
    p = run.params
    state = agent_mod.init_sets(rp, ns, table.fplus, int(p["imbalance"]), run.seed,
                                float(p["alpha"]))

    def factory():
        return core.TwinCrossClassifier(table.fplus, table.fminus,
                                        epochs=int(p["classifier_epochs"]), seed=run.seed)

    res = agent_mod.run_agent(state, factory, int(p["epochs"]), run.seed, float(p["lr"]))
    io.write_agent_trace(run.out / "agent_trace.csv", res.trace)
    ids = np.array(sorted(res.cleaned), dtype=np.int64)
    io.write_json(run.out / "cleaned.json", {
        "ids": ids, "labels": [res.cleaned[int(i)] for i in ids],
        "removed": {k: agent_mod.final_removals(s, table.fplus)
                    for k, s in res.state.streams.items()},
        "policies": {k: s.policy.to_dict() for k, s in res.state.streams.items()}})


# infer / evaluate

def cmd_infer(run, args):
    run.input("features", args.features)
    run.input("model", args.model)
    run.input("subnets", args.subnets)
    table, _, train = load_features(args.features)
    model = core.load_model(_require(args.model, "model file"))
    if not isinstance(model, core.TwinCrossModel):
        raise MalformedFileError("--model must be a twin-cross model", args.model)
    split = run.params["split"]
    if split not in ("test", "train", "all"):
        raise ParameterError("split must be test, train or all")
    mask = {"test": ~train, "train": train, "all": np.ones_like(train)}[split]
    run.start()
    ids = np.nonzero(mask)[0]
    pos, _, score = model.predict(table.fplus[ids], table.fminus[ids])
    rows = zip(ids, table.frame_id[ids], table.grid_xy[ids, 0], table.grid_xy[ids, 1],
               pos, score, table.gt[ids])
    io.write_csv(run.out / "predictions.csv", io.PREDICTION_HEADER, rows)
    if args.subnets and run.params["heatmaps"]:
        sub = core.load_model(_require(args.subnets, "subnet model file"))
        hdir = run.out / "heatmaps"
        hdir.mkdir(exist_ok=True)
        for f in np.unique(table.frame_id[ids]):
            sel = ids[table.frame_id[ids] == f]
            post = core.predict_subnets(sub, table.fplus[sel], table.fminus[sel])
            hm = core.heatmap(table.grid_shape, table.grid_xy[sel], post)
            for k, name in enumerate(patching.LESION_CLASSES):
                io.write_heatmap(hdir / f"frame_{int(f):04d}_{name}.csv", hm[k])


def read_predictions(path):
    p, rows = io.read_csv(_require(path, "predictions file"), io.PREDICTION_HEADER)
    if not rows:
        raise MalformedFileError("no predictions", p, 1)
    pred = np.array([io._num(p, n, r[4], int) for n, r in rows], dtype=bool)
    score = np.array([io._num(p, n, r[5]) for n, r in rows])
    gt = np.array([io._num(p, n, r[6], int) for n, r in rows], dtype=bool)
    return pred, score, gt


def cmd_evaluate(run, args):
    run.input("predictions", args.predictions)
    pred, score, gt = read_predictions(args.predictions)
    run.start()
    auc = None
    if 0 < gt.sum() < gt.size:
        (fpr, tpr, thr), auc = metrics.roc_auc(score, gt)
        io.write_roc(run.out / "roc.csv", fpr, tpr, thr)
    op = metrics.report(metrics.from_predictions(pred, gt), auc, "OP")
    pc, _ = metrics.binary_pc_op(pred, gt, auc)
    io.write_json(run.out / "report.json", {
        "n": int(gt.size), "OP": op.to_dict(), "PC": pc.to_dict(),
        "summary": metrics.table_columns(op, metrics.SUMMARY_COLUMNS),
        "error_rates": metrics.table_columns(op, metrics.ERROR_RATE_COLUMNS)})
    log.info("accuracy %.4f auc %s", op.accuracy, auc)


# link simulation

def _resolve_trace(spec, seed):
    suite = multirate.trace_suite()
    if spec in suite:
        return suite[spec]
    if spec == "fading":
        return multirate.fading_trace(seed)
    if spec == "ramp":
        return multirate.ramp_trace()
    return io.read_trace(_require(spec, "SNR trace file"))


def _resolve_table(path):
    if path is None:
        return multirate.DEFAULT_TABLE
    p = _require(path, "scheme table")
    try:
        return multirate.table_from_json(p.read_text())
    except (ValueError, TypeError) as exc:
        raise MalformedFileError(f"bad scheme table: {exc}", p) from None


def cmd_simlink(run, args):
    run.input("table", args.table)
    p = run.params
    trace = _resolve_trace(p["trace"], run.seed)
    table = _resolve_table(args.table)
    run.start()
    kw = dict(frame_size_bits=int(p["frame_bits"]), symbol_rate=float(p["symbol_rate"]),
              hysteresis=float(p["hysteresis"]), latency=float(p["latency"]), seed=run.seed)
    if p["fixed"]:
        by_name = {s.name: s for s in table}
        if p["fixed"] not in by_name:
            raise ParameterError(f"unknown scheme {p['fixed']!r}")
        res = multirate.run_fixed(trace, by_name[p["fixed"]], **kw)
    else:
        res = multirate.run_link(trace, table, feedback_period=float(p["feedback_period"]), **kw)
    io.write_trace(run.out / "trace.csv", trace)
    (run.out / "schemes.json").write_text(multirate.table_to_json(table) + "\n")
    io.write_events(run.out / "events.csv", res.events)
    st = res.state
    io.write_json(run.out / "link.json", {
        "active_scheme": st.active_scheme.name, "goodput_bits": st.goodput_bits,
        "goodput_rate": st.goodput_rate, "switch_count": st.switch_count,
        "frames_sent": st.frames_sent, "frames_delivered": st.frames_delivered,
        "duration": st.duration})


def cmd_sweep(run, args):
    run.input("predictions", args.predictions)
    run.input("table", args.table)
    p = run.params
    if args.predictions:
        pred, _, gt = read_predictions(args.predictions)
        correct = pred == gt
    else:
        correct = np.ones(1000, dtype=bool)
    trace = _resolve_trace(p["trace"], run.seed)
    table = _resolve_table(args.table)
    run.start()
    configs = multirate.default_sweep_configs(table, tuple(p["feedback_periods"]))
    rows = multirate.speed_accuracy_sweep(
        lambda got: correct[got].mean(), configs, trace, correct.size, table,
        p["reference_fps"], run.seed, frame_size_bits=int(p["frame_bits"]),
        symbol_rate=float(p["symbol_rate"]), hysteresis=float(p["hysteresis"]),
        latency=float(p["latency"]))
    io.write_sweep(run.out / "sweep.csv", rows)


def _guess_kind(path):
    first = Path(path).read_text().split("\n", 1)[0].strip()
    for kind, header in (("roc", io.ROC_HEADER), ("trace", io.SEARCH_HEADER),
                         ("sweep", io.SWEEP_HEADER)):
        if first == ",".join(header):
            return kind
    return "heatmap"


def cmd_plot(run, args):
    from . import plotting

    inputs = [_require(x, "plot input") for x in (args.input or [])]
    if not inputs:
        raise MissingInputError("plot needs at least one --input CSV")
    for k, x in enumerate(inputs):
        run.input(f"input{k}", x)
    run.start()
    for x in inputs:
        kind = run.params["kind"] or _guess_kind(x)
        if kind not in plotting.PLOTTERS:
            raise ParameterError(f"unknown plot kind {kind!r}")
        plotting.PLOTTERS[kind](x, run.out / (x.stem + ".svg"))


def cmd_pipeline(run, args):
    """generate -> extract -> search -> [agent] -> train -> infer -> evaluate -> sweep -> plot."""
    run.start()
    out = run.out
    base = dict(config=None, seed=run.seed)

    def sub(cmd, **kw):
        ns = argparse.Namespace(**{**_blank_args(), **base, **kw, "out": str(out / cmd)})
        r = Run(cmd, ns, run.file_cfg)
        t0 = time.perf_counter()
        COMMANDS[cmd](r, ns)
        log.info("%s done in %.1fs", cmd, time.perf_counter() - t0)

    sub("generate")
    sub("extract", data=str(out / "generate"))
    sub("search", features=str(out / "extract"))
    cleaned = None
    if run.params["agent"]:
        sub("agent", features=str(out / "extract"), search=str(out / "search"))
        cleaned = str(out / "agent")
    sub("train", features=str(out / "extract"), search=str(out / "search"), cleaned=cleaned)
    sub("infer", features=str(out / "extract"), model=str(out / "train" / "model.json"),
        subnets=str(out / "train" / "subnets.json"))
    sub("evaluate", predictions=str(out / "infer" / "predictions.csv"))
    sub("sweep", predictions=str(out / "infer" / "predictions.csv"))
    sub("plot", input=[str(out / "evaluate" / "roc.csv"),
                       str(out / "search" / "search_trace.csv"),
                       str(out / "sweep" / "sweep.csv")])


COMMANDS = {
    "generate": cmd_generate, "extract": cmd_extract, "search": cmd_search,
    "train": cmd_train, "agent": cmd_agent, "infer": cmd_infer, "evaluate": cmd_evaluate,
    "simlink": cmd_simlink, "sweep": cmd_sweep, "plot": cmd_plot, "pipeline": cmd_pipeline,
}

INPUT_FLAGS = ("data", "features", "search", "cleaned", "model", "subnets", "predictions",
               "table", "input")


def _blank_args():
    d = {k: None for k in INPUT_FLAGS}
    d.update({k: None for k in OVERRIDES})
    return d


def build_parser():
    ap = argparse.ArgumentParser(prog="octx", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    subs = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = subs.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=True, help="output run directory")
        for flag in INPUT_FLAGS:
            if flag == "input":
                sp.add_argument("--input", action="append")
            else:
                sp.add_argument(f"--{flag}")
        for key, (blocks, typ) in OVERRIDES.items():
            if name in blocks or name == "pipeline":
                sp.add_argument("--" + key.replace("_", "-"), dest=key, type=typ)
        if name == "pipeline":
            sp.add_argument("--with-agent", dest="with_agent", action="store_true",
                            help="clean rp/ns labels with the agent before training")
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        file_cfg = io.read_json(args.config) if args.config else {}
        if not isinstance(file_cfg, dict):
            raise MalformedFileError("config must be a JSON object", args.config, 1)
        if args.command == "pipeline":
            file_cfg = _with_pipeline_overrides(file_cfg, args)
            if args.with_agent:
                file_cfg.setdefault("pipeline", {})["agent"] = True
        run = Run(args.command, args, file_cfg)
        COMMANDS[args.command](run, args)
    except OctxError as exc:
        print(f"octx {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def _with_pipeline_overrides(file_cfg, args):
    """Push pipeline-level flags into the per-command blocks they belong to."""
    cfg = copy.deepcopy(file_cfg)
    for key, (blocks, _) in OVERRIDES.items():
        v = getattr(args, key, None)
        if v is not None:
            for b in blocks:
                cfg.setdefault(b, {})[key] = v
    return cfg


if __name__ == "__main__":
    sys.exit(main())
