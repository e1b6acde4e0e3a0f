"""Command-line entry point: ``stvgcn <command> --config run.json ...``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .attributes import ClassAttributeDictionary, MalformedAttribute, MissingClass
from .augment import COCO_PARENTS, AttackConfig, AttackConfigError, StreamKind
from .autograd import ConfigError, ShapeError
from .data import ParseError, SynthConfigError, SynthSpec, gen_synth, load_instances, to_padded, write_instances
from .graph import CapacityError, MalformedInput, build_edge_sets, edge_count
from .model import STVGCN, DegenerateInstance, ModelConfig
from .padding import pad_frames
from .selftrain import SelfTrainConfig, SelfTrainConfigError, SelfTrainError, self_train, synthetic_detector
from .train import NumericError, TrainConfig, attack_eval, evaluate, fused_evaluate, parse_attack, train

FUSE_STREAMS = ["joint", "bone", "joint_motion", "bone_motion"]


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- run config

@dataclass
class TrainSection:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 0.0125
    momentum: float = 0.9
    weight_decay: float = 0.0005
    lam: float = 0.1
    use_nb: bool = True
    rna: bool = True
    rna_min_nodes: int = 1
    rna_max_nodes: int = 3
    stream: str = "joint"


@dataclass
class DataSection:
    train: str | None = None  # index file
    test: str | None = None
    dictionary: str | None = None
    synth: dict = field(default_factory=dict)


@dataclass
class SelfTrainSection:
    c: float = 0.0
    e: int = 10
    noise: float = 0.1


@dataclass
class RunConfig:
    J: int = 17
    parent_map: dict = field(default_factory=lambda: dict(COCO_PARENTS))
    model: dict = field(default_factory=dict)
    train: TrainSection = field(default_factory=TrainSection)
    data: DataSection = field(default_factory=DataSection)
    selftrain: SelfTrainSection = field(default_factory=SelfTrainSection)
    seed: int = 0
    base_dir: Path = Path(".")

    def path(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def _strict(cls, obj, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    extra = set(obj) - known
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(extra)}")
    return cls(**obj)


MODEL_KEYS = {f.name for f in fields(ModelConfig)} - {"num_classes", "J", "c_ca", "seed"}


def parse_run_config(obj, base_dir=".") -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(obj) - {"skeleton_standard", "model", "train", "data", "selftrain", "seed"}
    if extra:
        raise ConfigError(f"unknown top-level key(s): {sorted(extra)}")
    rc = RunConfig(base_dir=Path(base_dir))
    sk = obj.get("skeleton_standard", {})
    if set(sk) - {"J", "parent_map"}:
        raise ConfigError(f"unknown key(s) in skeleton_standard: {sorted(set(sk) - {'J', 'parent_map'})}")
    rc.J = int(sk.get("J", 17))
    if "parent_map" in sk:
        rc.parent_map = {int(k): int(v) for k, v in sk["parent_map"].items()}
    elif rc.J != 17:
        raise ConfigError("skeleton_standard.parent_map is required when J != 17")
    model = obj.get("model", {})
    if not isinstance(model, dict) or set(model) - MODEL_KEYS:
        raise ConfigError(f"unknown key(s) in model: {sorted(set(model) - MODEL_KEYS)}")
    rc.model = dict(model)
    rc.train = _strict(TrainSection, obj.get("train", {}), "train")
    if rc.train.stream not in [k.value for k in StreamKind] + ["fuse4"]:
        raise ConfigError(f"unknown stream {rc.train.stream!r}")
    rc.data = _strict(DataSection, obj.get("data", {}), "data")
    rc.data.synth = dict(rc.data.synth)
    bad = set(rc.data.synth) - {f.name for f in fields(SynthSpec)}
    if bad:
        raise ConfigError(f"unknown key(s) in data.synth: {sorted(bad)}")
    rc.selftrain = _strict(SelfTrainSection, obj.get("selftrain", {}), "selftrain")
    rc.seed = int(obj.get("seed", 0))
    return rc


def load_run_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from None
    return parse_run_config(obj, path.parent)


# ---------------------------------------------------------------- helpers

def _synth_spec(rc: RunConfig):
    return SynthSpec(**rc.data.synth)


def _dictionary(rc: RunConfig):
    if rc.data.dictionary is None:
        raise ConfigError("data.dictionary is required")
    return ClassAttributeDictionary.load(rc.path(rc.data.dictionary))


def _load_split(rc: RunConfig, split, d):
    p = getattr(rc.data, split)
    if p is None:
        raise ConfigError(f"data.{split} is required")
    try:
        insts, names = load_instances(rc.path(p), d, rc.J)
    except FileNotFoundError as e:
        raise ParseError(e.filename, 0, "file not found") from None
    return insts, names


def _write_json(obj, out):
    text = json.dumps(obj, sort_keys=True)
    print(text)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")


def _model_config(rc: RunConfig, num_classes, c_ca, seed):
    return ModelConfig(num_classes=num_classes, J=rc.J, c_ca=c_ca, seed=seed, **rc.model)


def _save_model(model, out_dir: Path, stream, label_names):
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save(out_dir / "model.ckpt")
    meta = {"model": model.cfg.to_dict(), "stream": stream, "label_names": label_names}
    (out_dir / "model.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def _load_model(model_dir: Path):
    meta_path = model_dir / "model.json"
    if not meta_path.exists():
        raise ConfigError(f"no model.json in {model_dir}")
    meta = json.loads(meta_path.read_text())
    model = STVGCN(ModelConfig(**meta["model"]))
    model.load(model_dir / "model.ckpt")
    return model, meta["stream"]


def _streams(model_dir: Path):
    """{stream: model} for a single-stream or fused model directory."""
    if (model_dir / "model.json").exists():
        m, s = _load_model(model_dir)
        return {s: m}
    out = {}
    for s in FUSE_STREAMS:
        if not (model_dir / s).is_dir():
            raise ConfigError(f"{model_dir} is neither a model dir nor a fused model dir (missing {s}/)")
        out[s] = _load_model(model_dir / s)[0]
    return out


# ---------------------------------------------------------------- commands

def cmd_gen_synth(args, rc):
    spec = _synth_spec(rc)
    out = Path(args.out or "synth")
    seed = rc.seed if args.seed is None else args.seed
    tr, te, d = gen_synth(spec, seed)
    out.mkdir(parents=True, exist_ok=True)
    d.save(out / "dictionary.json")
    names = spec.label_names()
    write_instances(tr, out, d, names, stem="train")
    write_instances(te, out, d, names, stem="test")
    _write_json({"out": str(out), "n_train": len(tr), "n_test": len(te), "num_classes": spec.num_classes}, None)


def cmd_build_graphs(args, rc):
    """Parse a split, pad every instance and store the arrays as one .npz."""
    d = _dictionary(rc)
    insts, names = _load_split(rc, args.split, d)
    padded = to_padded(insts, d.c_ca)
    out = Path(args.out or f"{args.split}_graphs.npz")
    out.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for i, p in enumerate(padded):
        arrays[f"features_{i}"] = p.features
        arrays[f"valid_{i}"] = p.node_valid
        arrays[f"kind_{i}"] = p.node_kind
    arrays["labels"] = np.array([p.label for p in padded])
    np.savez_compressed(out, **arrays)
    _write_json({"out": str(out), "instances": len(padded), "label_names": names}, None)


def _train_one(rc, args, tr, te, d, stream, num_classes, seed, out_dir, names):
    ts = rc.train
    lam = ts.lam if args.lam is None else args.lam
    rna = None
    if ts.rna and not args.no_rna:
        rna = AttackConfig(categories=d.vectors, min_nodes=ts.rna_min_nodes, max_nodes=ts.rna_max_nodes)
    cfg = TrainConfig(epochs=ts.epochs, batch_size=ts.batch_size, lr=ts.lr, momentum=ts.momentum,
                      weight_decay=ts.weight_decay, lam=lam, use_nb=ts.use_nb, rna=rna, stream=stream,
                      parent_map=rc.parent_map, seed=seed)
    model = STVGCN(_model_config(rc, num_classes, d.c_ca, seed))
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = train(tr, model, cfg, eval_set=te, metrics_path=out_dir / "metrics.ndjson")
    _save_model(model, out_dir, stream, names)
    return metrics[-1]


def cmd_train(args, rc):
    d = _dictionary(rc)
    tr, names = _load_split(rc, "train", d)
    te = _load_split(rc, "test", d)[0] if rc.data.test else None
    tr = to_padded(tr, d.c_ca)
    te = to_padded(te, d.c_ca) if te is not None else None
    num_classes = len(names) if names else 1 + max(i.label for i in tr)
    seed = rc.seed if args.seed is None else args.seed
    stream = args.stream or rc.train.stream
    out = Path(args.out or "run")
    if stream == "fuse4":
        last = {s: _train_one(rc, args, tr, te, d, s, num_classes, seed, out / s, names) for s in FUSE_STREAMS}
    else:
        last = _train_one(rc, args, tr, te, d, stream, num_classes, seed, out, names)
    _write_json({"out": str(out), "final": last}, None)


def _eval_split(rc, args, d):
    insts, names = _load_split(rc, args.split, d)
    return to_padded(insts, d.c_ca), names


def cmd_eval(args, rc):
    d = _dictionary(rc)
    insts, names = _eval_split(rc, args, d)
    if args.model is None:
        # untrained baseline from the config
        num_classes = len(names) if names else 1 + max(i.label for i in insts)
        seed = rc.seed if args.seed is None else args.seed
        model = STVGCN(_model_config(rc, num_classes, d.c_ca, seed))
        model.fit_input_norm(insts)
        models = {args.stream or rc.train.stream: model}
    else:
        models = _streams(Path(args.model))
    if len(models) > 1:
        res = fused_evaluate(models, insts, rc.parent_map)
        labels = np.array([i.label for i in insts])
        pred = res["scores"].argmax(axis=1)
        per = {int(c): float(np.mean(pred[labels == c] == c)) for c in np.unique(labels)}
        res = {"accuracy": res["accuracy"], "per_class": per, "n": len(insts), "stream": "fuse4"}
    else:
        (stream, model), = models.items()
        if stream == "fuse4":
            raise ConfigError("fuse4 needs a fused model directory")
        res = evaluate(model, insts, stream, rc.parent_map)
        res["stream"] = stream
    res["per_class"] = {str(k): v for k, v in res["per_class"].items()}
    _write_json(res, args.out)


def cmd_attack_eval(args, rc):
    if args.model is None:
        raise UsageError("attack-eval needs --model")
    d = _dictionary(rc)
    insts, _ = _eval_split(rc, args, d)
    attack = parse_attack(args.attack, d, rc.train.rna_min_nodes, rc.train.rna_max_nodes)
    models = _streams(Path(args.model))
    if len(models) > 1:
        raise ConfigError("attack-eval works on single-stream models")
    (stream, model), = models.items()
    seed = rc.seed if args.seed is None else args.seed
    res = attack_eval(model, insts, attack, seed=seed, stream=stream, parent_map=rc.parent_map)
    res["attack"] = args.attack
    _write_json(res, args.out)


def cmd_selftrain_sim(args, rc):
    st = rc.selftrain
    seed = rc.seed if args.seed is None else args.seed
    oracle = synthetic_detector(noise=st.noise, seed=seed)
    res = self_train(oracle, oracle.labeled, oracle.unlabeled, SelfTrainConfig(c=st.c, e=st.e, seed=seed))
    for row in res.log:
        print(json.dumps(row))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        res.write_log(args.out)
    print(json.dumps({"count": res.count, "iterations": res.iterations, "final_loss": res.log[-1]["loss"]}))


def cmd_inspect(args, rc):
    d = _dictionary(rc)
    insts, names = _load_split(rc, args.split, d)
    if not 0 <= args.index < len(insts):
        raise UsageError(f"--index {args.index} outside [0, {len(insts)})")
    inst = insts[args.index]
    frames = []
    for vg in inst.frames:
        es = build_edge_sets(vg)
        frames.append({"frame": vg.frame_index, "persons": vg.m, "objects": len(vg.objects),
                       "nodes": vg.num_nodes, "edge_count": len(es),
                       "formula_edge_count": edge_count(vg.m, vg.J, vg.K_list)})
    p = pad_frames(inst.frames, d.c_ca, inst.label)
    occupancy = float(p.node_valid.mean())
    summary = {
        "index": args.index, "label": inst.label,
        "label_name": names[inst.label] if 0 <= inst.label < len(names) else None,
        "frames": len(inst.frames), "slots": int(p.node_valid.shape[1]),
        "mask_occupancy": occupancy, "edge_count": frames[0]["edge_count"],
        "per_frame": frames if args.per_frame else None,
    }
    _write_json(summary, args.out)


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "build-graphs": cmd_build_graphs,
    "train": cmd_train,
    "eval": cmd_eval,
    "attack-eval": cmd_attack_eval,
    "selftrain-sim": cmd_selftrain_sim,
    "inspect": cmd_inspect,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="stvgcn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="RunConfig JSON file")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output file or directory")
        return sp

    common(sub.add_parser("gen-synth", help="write a synthetic dataset"))
    sp = common(sub.add_parser("build-graphs", help="parse and pad a split into an .npz"))
    sp.add_argument("--split", choices=["train", "test"], default="train")
    sp = common(sub.add_parser("train", help="train a model"))
    sp.add_argument("--stream", choices=[s.value for s in StreamKind] + ["fuse4"])
    sp.add_argument("--lambda", dest="lam", type=float, help="weight of the node balance loss")
    sp.add_argument("--no-rna", action="store_true", help="disable random node attack augmentation")
    for name, text in (("eval", "accuracy on a split"), ("attack-eval", "accuracy before and after node injection")):
        sp = common(sub.add_parser(name, help=text))
        sp.add_argument("--model", help="model directory written by train")
        sp.add_argument("--split", choices=["train", "test"], default="test")
        sp.add_argument("--stream", choices=[s.value for s in StreamKind] + ["fuse4"])
    sp.add_argument("--attack", default="none", help="none | random | fixed:<class>")
    common(sub.add_parser("selftrain-sim", help="self-training loop on the synthetic detector"))
    sp = common(sub.add_parser("inspect", help="summarise one instance's graphs"))
    sp.add_argument("--split", choices=["train", "test"], default="train")
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--per-frame", action="store_true")
    return p


CONFIG_ERRORS = (UsageError, ConfigError, AttackConfigError, SynthConfigError, SelfTrainConfigError, TypeError)
DATA_ERRORS = (ParseError, MalformedInput, MalformedAttribute, MissingClass, CapacityError, DegenerateInstance,
               ShapeError, FileNotFoundError, SelfTrainError)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        rc = load_run_config(args.config)
        COMMANDS[args.command](args, rc)
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 3
    except CONFIG_ERRORS as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except DATA_ERRORS as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except FloatingPointError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
